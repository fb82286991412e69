"""Uniform periodic grids, wave functions and their spectral operations.

Conventions: the grid covers ``[-L, L)`` per axis with ``N`` points; momenta are
``2 pi fftfreq(N, dx)`` so ``p = -i d/dx``. The forward transform is the plain
unnormalized FFT; norms are ``sum |psi|^2 dx**n``.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from .errors import DomainError, ValidationError

__all__ = [
    "Grid",
    "WaveFunction",
    "make_gaussian",
    "from_function",
    "momentum_bump",
    "apply_fourier_multiplier",
    "apply_position_multiplier",
    "dilate",
    "theta_apply",
    "save_snapshot",
    "load_snapshot",
]

SNAPSHOT_MAGIC = b"TDHO"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIIIdd")

# fraction of the axis (or momentum window) a state may occupy after a dilation
_MARGIN = 0.95
_LEAK_TOL = 1e-8


def fftn(a):
    return sfft.fftn(a, workers=-1)


def ifftn(a):
    return sfft.ifftn(a, workers=-1)


@dataclass(frozen=True)
class Grid:
    """``dim``-dimensional periodic grid with ``N`` points per axis on ``[-L, L)``."""

    dim: int
    N: int
    L: float

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValidationError(f"dim must be 1 or 2, got {self.dim!r}")
        if self.N < 2 or self.N & (self.N - 1):
            raise ValidationError(f"N must be a power of two, got {self.N!r}")
        if not (self.L > 0 and math.isfinite(self.L)):
            raise ValidationError(f"L must be positive, got {self.L!r}")

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def dp(self) -> float:
        return math.pi / self.L

    @property
    def p_max(self) -> float:
        return math.pi * self.N / (2.0 * self.L)

    @property
    def shape(self):
        return (self.N,) * self.dim

    @property
    def cell(self) -> float:
        return self.dx**self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.L + self.dx * np.arange(self.N)

    @cached_property
    def p_axis(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.N, d=self.dx)

    @cached_property
    def x(self):
        """Position coordinates, one broadcastable array per axis."""
        return _axes(self.axis, self.dim)

    @cached_property
    def p(self):
        """Momentum coordinates in FFT order, one broadcastable array per axis."""
        return _axes(self.p_axis, self.dim)

    @cached_property
    def r2(self) -> np.ndarray:
        return sum(c * c for c in self.x) + np.zeros(self.shape)

    @cached_property
    def p2(self) -> np.ndarray:
        return sum(c * c for c in self.p) + np.zeros(self.shape)

    @cached_property
    def r2_levels(self):
        """``(values, inverse)`` with ``values[inverse] == r2``; radial functions
        need only be evaluated on ``values``."""
        v, inv = np.unique(self.r2, return_inverse=True)
        return v, inv.reshape(self.shape)

    @cached_property
    def p2_levels(self):
        v, inv = np.unique(self.p2, return_inverse=True)
        return v, inv.reshape(self.shape)


def _axes(v, dim):
    if dim == 1:
        return (v,)
    return (v[:, None], v[None, :])


class WaveFunction:
    """Immutable complex amplitudes on a :class:`Grid` with a time tag."""

    __slots__ = ("grid", "amplitudes", "time_tag")

    def __init__(self, grid: Grid, amplitudes, time_tag: float = 0.0):
        a = np.array(amplitudes, dtype=np.complex128)
        if a.shape != grid.shape:
            raise ValidationError(f"amplitudes have shape {a.shape}, grid wants {grid.shape}")
        a.flags.writeable = False
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "time_tag", float(time_tag))

    def __setattr__(self, name, value):
        raise AttributeError("WaveFunction is immutable")

    def __repr__(self):
        return f"WaveFunction(grid={self.grid!r}, norm={self.norm():.6g}, time_tag={self.time_tag!r})"

    def replace(self, amplitudes=None, time_tag=None) -> "WaveFunction":
        return WaveFunction(
            self.grid,
            self.amplitudes if amplitudes is None else amplitudes,
            self.time_tag if time_tag is None else time_tag,
        )

    def __add__(self, other):
        return self.replace(self.amplitudes + other.amplitudes)

    def __sub__(self, other):
        return self.replace(self.amplitudes - other.amplitudes)

    def __mul__(self, c):
        return self.replace(c * self.amplitudes)

    __rmul__ = __mul__

    def spectrum(self) -> np.ndarray:
        return fftn(self.amplitudes)

    def norm(self) -> float:
        return math.sqrt(float(np.vdot(self.amplitudes, self.amplitudes).real) * self.grid.cell)

    def norm_momentum(self) -> float:
        """Norm computed on the Fourier side (Parseval)."""
        s = self.spectrum()
        return math.sqrt(float(np.vdot(s, s).real) * self.grid.cell / s.size)

    def inner(self, other: "WaveFunction") -> complex:
        """``<self, other>``, antilinear in ``self``."""
        return complex(np.vdot(self.amplitudes, other.amplitudes)) * self.grid.cell

    def distance(self, other: "WaveFunction") -> float:
        return (self - other).norm()

    def density(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def expect_x(self) -> np.ndarray:
        rho = self.density()
        tot = rho.sum()
        return np.array([(rho * c).sum() / tot for c in self.grid.x])

    def expect_p(self) -> np.ndarray:
        s = np.abs(self.spectrum()) ** 2
        tot = s.sum()
        return np.array([(s * c).sum() / tot for c in self.grid.p])

    def expect_x2(self) -> float:
        rho = self.density()
        return float((rho * self.grid.r2).sum() / rho.sum())

    def expect_p2(self) -> float:
        s = np.abs(self.spectrum()) ** 2
        return float((s * self.grid.p2).sum() / s.sum())

    def variance_x(self) -> np.ndarray:
        """Per-axis position variance."""
        rho = self.density()
        tot = rho.sum()
        out = []
        for c in self.grid.x:
            mu = (rho * c).sum() / tot
            out.append((rho * (c - mu) ** 2).sum() / tot)
        return np.array(out)


def make_gaussian(grid: Grid, center, momentum, width: float, time_tag: float = 0.0) -> WaveFunction:
    """Normalized ``exp(-|x - x0|^2 / (2 width^2) + i p0 . x)``.

    Raises ``DomainError`` unless the center is at least ``6 width`` from
    every boundary.
    """
    center = np.broadcast_to(np.asarray(center, dtype=float), (grid.dim,))
    momentum = np.broadcast_to(np.asarray(momentum, dtype=float), (grid.dim,))
    if not width > 0:
        raise DomainError("width must be positive")
    if np.any(np.abs(center) + 6.0 * width > grid.L):
        raise DomainError("Gaussian is within 6 widths of the boundary")
    if np.any(np.abs(momentum) + 6.0 / width > grid.p_max):
        raise DomainError("Gaussian spectrum is within 6 widths of the momentum cutoff")
    logpsi = np.zeros(grid.shape, dtype=np.complex128)
    for c, x0, p0 in zip(grid.x, center, momentum):
        logpsi = logpsi + (-((c - x0) ** 2) / (2.0 * width**2) + 1j * p0 * c)
    psi = np.exp(logpsi)
    psi /= math.sqrt(float(np.vdot(psi, psi).real) * grid.cell)
    return WaveFunction(grid, psi, time_tag)


def from_function(grid: Grid, f, normalize: bool = True, time_tag: float = 0.0) -> WaveFunction:
    """Sample ``f(*coords)`` on the grid."""
    psi = np.asarray(f(*grid.x), dtype=np.complex128) + np.zeros(grid.shape)
    if normalize:
        nrm = math.sqrt(float(np.vdot(psi, psi).real) * grid.cell)
        if nrm == 0:
            raise DomainError("cannot normalize the zero state")
        psi = psi / nrm
    return WaveFunction(grid, psi, time_tag)


def momentum_bump(grid: Grid, center, radius: float, time_tag: float = 0.0) -> WaveFunction:
    """State whose spectrum is the smooth compact bump ``exp(-1/(1 - |p - c|^2/radius^2))``.

    The position profile decays faster than any power but not like a
    Gaussian, so the box must be generous.
    """
    center = np.broadcast_to(np.asarray(center, dtype=float), (grid.dim,))
    if not radius > 0:
        raise DomainError("radius must be positive")
    if np.any(np.abs(center) + radius >= grid.p_max):
        raise DomainError("bump does not fit inside the momentum window")
    u = sum((pc - c) ** 2 for pc, c in zip(grid.p, center)) / radius**2
    inside = u < 1.0
    spec = np.where(inside, np.exp(-1.0 / np.where(inside, 1.0 - u, 1.0)), 0.0)
    # shift so the state is centered at x = 0 rather than at the box corner
    shift = np.exp(1j * sum(pc * grid.L for pc in grid.p))
    a = ifftn(spec * shift)
    nrm = math.sqrt(float(np.vdot(a, a).real) * grid.cell)
    return WaveFunction(grid, a / nrm, time_tag)


def apply_fourier_multiplier(psi: WaveFunction, f) -> WaveFunction:
    """``F^-1 f(p) F psi``; ``f`` is an array on the momentum lattice (FFT order)
    or a callable taking one coordinate array per axis."""
    mult = f(*psi.grid.p) if callable(f) else f
    return psi.replace(ifftn(np.asarray(mult) * fftn(psi.amplitudes)))


def apply_position_multiplier(psi: WaveFunction, g) -> WaveFunction:
    """Pointwise product with ``g`` (array or callable on position coordinates)."""
    mult = g(*psi.grid.x) if callable(g) else g
    return psi.replace(np.asarray(mult) * psi.amplitudes)


def _leak(weights, coords, limit):
    """Relative mass of ``weights`` outside the box ``|c| <= limit``."""
    outside = np.zeros(weights.shape, dtype=bool)
    for c in coords:
        outside = outside | (np.abs(c) > limit)
    tot = weights.sum()
    return 0.0 if tot == 0 else float(weights[outside].sum() / tot)


def _resample_axis(a, axis, grid, scale, chunk=512):
    """Evaluate the trigonometric interpolant of ``a`` along ``axis`` at
    ``scale * x``; points mapped outside ``[-L, L)`` are set to zero."""
    N, x0 = grid.N, grid.axis[0]
    spec = sfft.fft(a, axis=axis, workers=-1)
    spec = np.moveaxis(spec, axis, 0)
    y = scale * grid.axis
    inside = (y >= -grid.L) & (y < grid.L)
    out = np.zeros(spec.shape, dtype=np.complex128)
    p = grid.p_axis
    flat = spec.reshape(N, -1)
    res = out.reshape(N, -1)
    idx = np.flatnonzero(inside)
    for start in range(0, idx.size, chunk):
        rows = idx[start:start + chunk]
        E = np.exp(1j * np.outer(y[rows] - x0, p)) / N
        res[rows] = E @ flat
    return np.moveaxis(res.reshape(spec.shape), 0, axis)


def dilate(psi: WaveFunction, beta: float) -> WaveFunction:
    """``exp(-i beta A) psi`` with ``A = x.p + p.x``, i.e.
    ``x -> exp(-n beta) psi(exp(-2 beta) x)``.

    The state is resampled through its band-limited interpolant. Raises
    ``DomainError`` when the stretched state would leave the box or the
    compressed spectrum would reach the momentum cutoff.
    """
    g = psi.grid
    if beta == 0:
        return psi
    stretch = math.exp(2.0 * beta)
    if not 1.0 / 64 <= stretch <= 64:
        raise DomainError(f"dilation factor {stretch:.4g} outside [1/64, 64]")
    a = psi.amplitudes
    if _leak(psi.density(), g.x, _MARGIN * g.L * min(1.0, 1.0 / stretch)) > _LEAK_TOL:
        raise DomainError("dilated state would leave the grid")
    spec2 = np.abs(fftn(a)) ** 2
    if _leak(spec2, g.p, _MARGIN * g.p_max * min(1.0, stretch)) > _LEAK_TOL:
        raise DomainError("dilated spectrum would reach the momentum cutoff")
    out = a
    for ax in range(g.dim):
        out = _resample_axis(out, ax, g, 1.0 / stretch)
    return psi.replace(out * math.exp(-g.dim * beta))


def theta_apply(psi: WaveFunction, model, t: float, origin_guard: float | None = None) -> WaveFunction:
    """Symmetrized ``(x/|x|) . (p - m (1 - 2 lam) t**-(1 - 2 lam) x)``."""
    g = psi.grid
    if not t > model.r0:
        raise DomainError("theta_apply needs t > r0")
    guard = g.dx if origin_guard is None else origin_guard
    c = model.m * (1.0 - 2.0 * model.lam) * t ** (-(1.0 - 2.0 * model.lam))
    rad = np.maximum(np.sqrt(g.r2), guard)
    a = psi.amplitudes
    out = np.zeros(g.shape, dtype=np.complex128)
    for xi, pi in zip(g.x, g.p):
        u = xi / rad

        def v(f):
            return ifftn(pi * fftn(f)) - c * xi * f

        out += 0.5 * (u * v(a) + v(u * a))
    return psi.replace(out)


def save_snapshot(psi: WaveFunction, path) -> None:
    g = psi.grid
    header = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, g.dim, g.N, g.L, psi.time_tag)
    body = np.ascontiguousarray(psi.amplitudes, dtype="<c16").tobytes(order="C")
    Path(path).write_bytes(header + body)


def load_snapshot(path) -> WaveFunction:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValidationError("snapshot truncated")
    magic, version, dim, N, L, tag = _HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise ValidationError("not a TDHO snapshot")
    if version != SNAPSHOT_VERSION:
        raise ValidationError(f"unsupported snapshot version {version}")
    grid = Grid(dim, N, L)
    body = raw[_HEADER.size:]
    if len(body) != 16 * N**dim:
        raise ValidationError("snapshot body has the wrong length")
    amps = np.frombuffer(body, dtype="<c16").reshape(grid.shape)
    return WaveFunction(grid, amps, tag)
