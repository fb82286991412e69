"""Charged particle in a time-decaying uniform magnetic field (2D, symmetric gauge).

    H_B(t) = (p1 + q B x2 / 2)^2 / 2m + (p2 - q B x1 / 2)^2 / 2m + V(t, x)
           = p^2/2m + q^2 B^2 |x|^2 / 8m - (q B / 2m) L + V(t, x),   L = x1 p2 - x2 p1.

With ``Omega(t) = int_0^t q B / m`` the rotation ``exp(i Omega L / 2)``
removes the ``L`` term and leaves an oscillator with ``k(t) = q^2 B(t)^2 / 4m``
and the potential seen in rotated coordinates.

``exp(i theta L)`` acts as ``psi -> psi(R_theta x)``, so it turns expectation
values by ``-theta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import scipy.fft as sfft

from .errors import DomainError, ValidationError
from .grid import WaveFunction, fftn, ifftn, make_gaussian
from .oscillator import ConstantK0, OscillatorModel
from .potential import PotentialSpec, potential_eval
from .propagator import Schedule, StepPolicy, _breakpoints, _evolve

__all__ = [
    "MagneticModel",
    "omega_phase",
    "rotate_state",
    "evolve_magnetic",
    "evolve_rotating_oscillator",
    "reduction_residual",
    "angular_momentum",
    "cyclotron_period_error",
]

# rotations need the state inside this fraction of the box and momentum window;
# the tolerance is on mass, so amplitude errors are its square root
_SAFE_RADIUS = 0.85
_LEAK_TOL = 1e-14

PotentialLike = Union[PotentialSpec, Callable, None]


@dataclass(frozen=True)
class MagneticModel:
    """Field ``B0`` for ``|t| <= r0`` and ``Bbar / |t|`` beyond."""

    q: float
    B0: float
    Bbar: float
    m: float
    r0: float

    def __post_init__(self):
        if self.q == 0 or not math.isfinite(self.q):
            raise ValidationError("charge must be nonzero and finite")
        if not (self.m > 0 and self.r0 > 0):
            raise ValidationError("m and r0 must be positive")
        if not (math.isfinite(self.B0) and math.isfinite(self.Bbar)):
            raise ValidationError("field values must be finite")
        if not (self.q * self.Bbar) ** 2 / (4 * self.m) < self.m / 4:
            raise ValidationError("need q^2 Bbar^2 / (4m) < m/4 for a decaying oscillator")

    def B(self, t):
        t = np.asarray(t, dtype=float)
        inside = np.abs(t) <= self.r0
        out = np.where(inside, self.B0, self.Bbar / np.where(inside, 1.0, np.abs(t)))
        return out.item() if out.ndim == 0 else out

    def k_of_t(self, t):
        return self.q**2 * self.B(t) ** 2 / (4.0 * self.m)

    @property
    def oscillator(self) -> OscillatorModel:
        """The oscillator with ``k(t) = q^2 B(t)^2 / 4m``."""
        return OscillatorModel(
            m=self.m, k=self.q**2 * self.Bbar**2 / (4.0 * self.m), r0=self.r0,
            inner=ConstantK0(self.q**2 * self.B0**2 / (4.0 * self.m)))


def omega_phase(mm: MagneticModel, t: float) -> float:
    """``int_0^t q B / m``, exact for the piecewise field."""
    q, m, r0 = mm.q, mm.m, mm.r0
    if abs(t) <= r0:
        return q * mm.B0 * t / m
    return math.copysign(q * mm.B0 * r0 / m + q * mm.Bbar / m * math.log(abs(t) / r0), t)


def _disc_leak(weights, coords, radius):
    r2 = sum(c * c for c in coords)
    tot = weights.sum()
    return 0.0 if tot == 0 else float(weights[r2 > radius * radius].sum() / tot)


def _check_rotatable(a, grid):
    if _disc_leak(np.abs(a) ** 2, grid.x, _SAFE_RADIUS * grid.L) > _LEAK_TOL:
        raise DomainError("state leaves the rotation-safe disc")
    if _disc_leak(np.abs(fftn(a)) ** 2, grid.p, _SAFE_RADIUS * grid.p_max) > _LEAK_TOL:
        raise DomainError("spectrum leaves the rotation-safe disc")


class _Rotator:
    """``psi -> psi(R_theta x)`` on a square 2D grid."""

    def __init__(self, grid):
        self.grid = grid
        self.neg = (-np.arange(grid.N)) % grid.N
        self.p = grid.p_axis
        self.x = grid.axis

    def _quarter(self, a, turns):
        # psi(R_{pi/2} x) = psi(-x2, x1)
        for _ in range(turns % 4):
            a = a.T[:, self.neg]
        return a

    def _shear(self, a, s, axis):
        # axis 0: psi(x1 + s x2, x2); axis 1: psi(x1, x2 + s x1)
        if s == 0:
            return a
        if axis == 0:
            phase = np.exp(1j * s * np.outer(self.p, self.x))
            return sfft.ifft(phase * sfft.fft(a, axis=0, workers=-1), axis=0, workers=-1)
        phase = np.exp(1j * s * np.outer(self.x, self.p))
        return sfft.ifft(phase * sfft.fft(a, axis=1, workers=-1), axis=1, workers=-1)

    def __call__(self, a, theta):
        turns = round(theta / (0.5 * math.pi))
        rest = theta - turns * 0.5 * math.pi
        a = self._quarter(a, turns)
        if rest != 0:
            t = -math.tan(0.5 * rest)
            a = self._shear(a, t, 0)
            a = self._shear(a, math.sin(rest), 1)
            a = self._shear(a, t, 0)
        return a


def rotate_state(psi: WaveFunction, angle: float) -> WaveFunction:
    """``exp(i angle L) psi``, i.e. ``x -> psi(R_angle x)``.

    Quarter turns are exact index permutations; the remainder (at most
    ``pi/4``) is three spectral shears. Raises ``DomainError`` unless the state
    and its spectrum sit inside the rotation-safe discs.
    """
    g = psi.grid
    if g.dim != 2:
        raise ValidationError("rotations need a 2D grid")
    if angle == 0:
        return psi
    _check_rotatable(psi.amplitudes, g)
    return psi.replace(_Rotator(g)(psi.amplitudes, angle))


def angular_momentum(psi: WaveFunction) -> float:
    """``<psi, L psi> / <psi, psi>``."""
    g = psi.grid
    a = psi.amplitudes
    spec = fftn(a)
    p1a = ifftn(g.p[0] * spec)
    p2a = ifftn(g.p[1] * spec)
    La = g.x[0] * p2a - g.x[1] * p1a
    return float(np.vdot(a, La).real / np.vdot(a, a).real)


def _potential_on(V, t, coords):
    if V is None:
        return None
    if isinstance(V, PotentialSpec):
        return potential_eval(V, t, coords)
    return np.asarray(V(t, *coords), dtype=float)


class _MagneticEngine:
    """Strang kernel with the rotation split off symmetrically.

    One step is ``R(th/2) exp(-i h X/2) exp(-i h K) exp(-i h X/2) R(th/2)``
    with ``th`` the exact rotation angle over the step; adjacent half
    rotations are merged.
    """

    def __init__(self, name, mm, V, grid, rotating_frame):
        self.name = name
        self.mm = mm
        self.V = V
        self.grid = grid
        self.rotating_frame = rotating_frame
        self.rot = _Rotator(grid)
        self.p2h = grid.p2 / (2.0 * mm.m)
        self.x2h = grid.r2 / 2.0

    def _angle(self, ta, tb):
        # exp(-i int -(qB/2m) L) = exp(i theta L)
        if self.rotating_frame:
            return 0.0
        return 0.5 * (omega_phase(self.mm, tb) - omega_phase(self.mm, ta))

    def _position(self, t):
        X = self.mm.k_of_t(t) * self.x2h
        if self.V is None:
            return X
        coords = self.grid.x
        if self.rotating_frame:
            # potential seen in the rotated frame: V(t, R_{-Omega/2} x)
            w = -0.5 * omega_phase(self.mm, t)
            c, s = math.cos(w), math.sin(w)
            coords = (c * coords[0] - s * coords[1], s * coords[0] + c * coords[1])
        return X + _potential_on(self.V, t, coords)

    def run(self, a, ta, tb, n):
        h = (tb - ta) / n
        ts = ta + h * np.arange(n + 1)
        ts[-1] = tb
        carry = 0.0
        for j in range(n):
            th = self._angle(ts[j], ts[j + 1])
            if carry + 0.5 * th != 0:
                a = self.rot(a, carry + 0.5 * th)
            X = self._position(0.5 * (ts[j] + ts[j + 1]))
            half = np.exp(-0.5j * h * X)
            a = half * a
            a = ifftn(np.exp(-1j * h * self.p2h) * fftn(a))
            a = half * a
            carry = 0.5 * th
        if carry != 0:
            a = self.rot(a, carry)
        return a

    def kinetic_only(self, a, ta, tb):
        return ifftn(np.exp(-1j * (tb - ta) * self.p2h) * fftn(a))


def _run(mm, V, psi, t0, t1, policy, schedule, rotating_frame):
    if psi.grid.dim != 2:
        raise ValidationError("magnetic evolution needs a 2D grid")
    if t0 == t1:
        return psi.replace(time_tag=t1)
    name = "OS" if rotating_frame else "B"
    engine = _MagneticEngine(name, mm, V, psi.grid, rotating_frame)
    if not rotating_frame:
        _check_rotatable(psi.amplitudes, psi.grid)
    model_like = _Breaks(mm.r0)
    return _evolve(engine, psi, _breakpoints(model_like, t0, t1, True), policy, schedule, t1)


@dataclass(frozen=True)
class _Breaks:
    r0: float


def evolve_magnetic(mm: MagneticModel, V: PotentialLike, psi: WaveFunction, t0: float, t1: float,
                    policy: StepPolicy = StepPolicy(), schedule: Optional[Schedule] = None) -> WaveFunction:
    """``U_B(t1, t0) psi``.

    ``V`` is a :class:`PotentialSpec`, a callable ``V(t, x1, x2)`` or ``None``.
    """
    return _run(mm, V, psi, t0, t1, policy, schedule, rotating_frame=False)


def evolve_rotating_oscillator(mm: MagneticModel, V: PotentialLike, psi: WaveFunction, t0: float,
                               t1: float, policy: StepPolicy = StepPolicy(),
                               schedule: Optional[Schedule] = None) -> WaveFunction:
    """Evolution under ``p^2/2m + k(t)|x|^2/2 + V(t, R_{-Omega(t)/2} x)``."""
    return _run(mm, V, psi, t0, t1, policy, schedule, rotating_frame=True)


def reduction_residual(mm: MagneticModel, V: PotentialLike, psi: WaveFunction, t: float,
                       policy: StepPolicy = StepPolicy()) -> float:
    """``|U_B(t, 0) psi - exp(i Omega(t) L / 2) U_OS(t, 0) psi|``."""
    if t == 0:
        return 0.0
    lhs = evolve_magnetic(mm, V, psi, 0.0, t, policy)
    rhs = rotate_state(evolve_rotating_oscillator(mm, V, psi, 0.0, t, policy), 0.5 * omega_phase(mm, t))
    return lhs.distance(rhs)


def cyclotron_period_error(mm: MagneticModel, radius: float, grid, periods: float = 1.0, dt: float = 0.05,
                           samples: int = 16) -> float:
    """Relative error of the cyclotron period seen by a packet in the field ``B0``.

    The packet starts at ``(radius, 0)`` with the canonical momentum that puts
    its orbit around the origin and the coherent width ``sqrt(2 / |q B0|)``;
    the period comes from a linear fit of the unwrapped polar angle of ``<x>``.
    """
    if mm.B0 == 0:
        raise ValidationError("no cyclotron motion without a field")
    wc = mm.q * mm.B0 / mm.m
    period = 2 * math.pi / abs(wc)
    # r0 past the run keeps the field constant
    const = MagneticModel(q=mm.q, B0=mm.B0, Bbar=mm.Bbar, m=mm.m, r0=2.0 * periods * period)
    width = math.sqrt(2.0 / abs(mm.q * mm.B0))
    psi = make_gaussian(grid, (radius, 0.0), (0.0, -mm.q * mm.B0 * radius / 2.0), width)
    ts = np.linspace(0.0, periods * period, samples + 1)[1:]
    pol = StepPolicy().fixed(dt)
    ang, cur, prev = [], psi, 0.0
    for t in ts:
        cur = evolve_magnetic(const, None, cur, prev, float(t), pol)
        prev = float(t)
        x = cur.expect_x()
        ang.append(math.atan2(x[1], x[0]))
    slope = np.polyfit(ts, np.unwrap(ang), 1)[0]
    return abs(2 * math.pi / abs(slope) - period) / period
