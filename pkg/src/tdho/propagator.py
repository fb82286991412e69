"""Time evolution.

Three engines share one Strang kernel:

* :func:`evolve_full` for ``H(t) = p^2/(2m) + k(t) x^2/2 + V(t, x)``,
* :func:`evolve_S` for ``H_S(t) = p^2/(2m |t|^(2 lam)) + V(t, |t|^lam x)``,
* :func:`evolve_free_S`, the exact Fourier multiplier for ``H_S`` with ``V = 0``.

Each Strang step samples the position part at the step midpoint and uses the
exact time integral of the kinetic coefficient, so the kernel is exact whenever
the position part vanishes.

Intervals are cut at ``0``, ``+-r0`` and ``+-r0 * 2**j``. Each piece ("leg") is
refined by halving until two successive step counts agree to the policy's
error budget; the resolved counts are kept in a :class:`Schedule` that callers
can reuse so repeated evolutions through the same leg use the same mesh.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ConvergenceError, DomainError, ValidationError
from .grid import WaveFunction, dilate, fftn, ifftn
from .oscillator import FundamentalSolution, OscillatorModel
from .potential import PotentialSpec

__all__ = [
    "StepPolicy",
    "Schedule",
    "evolve_full",
    "evolve_S",
    "evolve_free_S",
    "GaussianParams",
    "gaussian_params_from",
    "evolve_gaussian_exact",
    "gaussian_wavefunction",
    "gaussian_variance",
    "dressing_apply",
    "factorization_residual",
    "kinetic_integral",
    "boundary_leak",
]

log = logging.getLogger(__name__)

# mass allowed in the outer 5% of the box (or of the momentum window)
_EDGE_FRACTION = 0.05
_EDGE_TOL = 1e-10


@dataclass(frozen=True)
class StepPolicy:
    """Step control for the Strang engines.

    Each leg starts at ``ceil(length / dt_max)`` steps. With ``adaptive`` the
    count is doubled until ``|psi_n - psi_2n| / 3`` is at most

        error_target * length + relative_target * |psi_2n - psi_kin|

    where ``psi_kin`` is the kinetic-only evolution over the leg, so the second
    term scales with how much the position part did on that leg. At most
    ``max_halvings`` doublings are tried; without ``adaptive`` ``dt_max`` is
    used as is.
    """

    dt_max: float = 0.05
    error_target: float = 1e-8
    max_halvings: int = 14
    adaptive: bool = True
    relative_target: float = 0.0

    def __post_init__(self):
        if not self.dt_max > 0:
            raise ValidationError("dt_max must be positive")
        if not self.error_target > 0:
            raise ValidationError("error_target must be positive")
        if self.max_halvings < 0:
            raise ValidationError("max_halvings must be >= 0")
        if not self.relative_target >= 0:
            raise ValidationError("relative_target must be >= 0")

    def fixed(self, dt: float) -> "StepPolicy":
        return replace(self, dt_max=dt, adaptive=False)


@dataclass
class Schedule:
    """Resolved step counts per leg, keyed by ``(engine, lo, hi)``.

    A schedule is owned by one caller; pass it to several evolutions to make
    them share a mesh.
    """

    steps: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)

    def total_steps(self) -> int:
        return sum(self.steps.values())


def _breakpoints(model, t0, t1, with_inner):
    lo, hi = min(t0, t1), max(t0, t1)
    r0 = model.r0
    pts = {lo, hi}
    if with_inner:
        pts.update(p for p in (0.0, r0, -r0) if lo < p < hi)
    if hi > r0:
        j = 1
        while r0 * 2.0**j < hi:
            if r0 * 2.0**j > lo:
                pts.add(r0 * 2.0**j)
            j += 1
    if lo < -r0:
        j = 1
        while -r0 * 2.0**j > lo:
            if -r0 * 2.0**j < hi:
                pts.add(-r0 * 2.0**j)
            j += 1
    pts = sorted(pts)
    # interior points within roundoff of an endpoint would make a degenerate leg
    tiny = 1e-12 * max(abs(lo), abs(hi), r0)
    pts = [lo] + [p for p in pts[1:-1] if p - lo > tiny and hi - p > tiny] + [hi]
    if t1 < t0:
        pts = pts[::-1]
    return pts


def boundary_leak(psi: WaveFunction) -> tuple:
    """Relative mass in the outer band of the box and of the momentum window."""
    g = psi.grid
    a = psi.amplitudes
    rho = np.abs(a) ** 2
    tot = rho.sum()
    if tot == 0:
        return 0.0, 0.0
    edge_x = np.zeros(g.shape, dtype=bool)
    edge_p = np.zeros(g.shape, dtype=bool)
    for c, q in zip(g.x, g.p):
        edge_x = edge_x | (np.abs(c) > (1 - _EDGE_FRACTION) * g.L)
        edge_p = edge_p | (np.abs(q) > (1 - _EDGE_FRACTION) * g.p_max)
    spec = np.abs(fftn(a)) ** 2
    return float(rho[edge_x].sum() / tot), float(spec[edge_p].sum() / spec.sum())


def _check_margin(a, psi_like, where):
    lx, lp = boundary_leak(psi_like.replace(a))
    if lx > _EDGE_TOL or lp > _EDGE_TOL:
        raise DomainError(
            f"state reached the grid edge at {where} (position leak {lx:.3g}, momentum leak {lp:.3g})")


class _Engine:
    """Strang kernel for ``i psi' = (c(t) p^2/(2m) + X(t, |x|^2)) psi``.

    ``position_part(t)`` returns ``X`` on the distinct values of ``|x|^2``
    (or ``None`` when it vanishes); phases are exponentiated there and
    gathered onto the grid.
    """

    def __init__(self, name, grid, m, kin_integral, position_part):
        self.name = name
        self.grid = grid
        p2v, self.p_inv = grid.p2_levels
        self.p2h = p2v / (2.0 * m)
        self.r_inv = grid.r2_levels[1]
        self.kin_integral = kin_integral
        self.position_part = position_part

    def _kinetic(self, a, kappa):
        return ifftn(np.exp(-1j * kappa * self.p2h)[self.p_inv] * fftn(a))

    def run(self, a, ta, tb, n):
        h = (tb - ta) / n
        ts = ta + h * np.arange(n + 1)
        ts[-1] = tb
        # second half of the previous step's position phase, merged into the next one
        pending = None
        for j in range(n):
            X = self.position_part(0.5 * (ts[j] + ts[j + 1]))
            if X is not None or pending is not None:
                expo = X if pending is None else (pending if X is None else X + pending)
                a = a * np.exp(-0.5j * h * expo)[self.r_inv]
            pending = X
            a = self._kinetic(a, self.kin_integral(ts[j], ts[j + 1]))
        if pending is not None:
            a = a * np.exp(-0.5j * h * pending)[self.r_inv]
        return a

    def kinetic_only(self, a, ta, tb):
        return self._kinetic(a, self.kin_integral(ta, tb))


def _evolve(engine, psi, points, policy, schedule, t1):
    a = psi.amplitudes
    for ta, tb in zip(points[:-1], points[1:]):
        if ta == tb:
            continue
        key = (engine.name, min(ta, tb), max(ta, tb))
        length = abs(tb - ta)
        n0 = max(1, math.ceil(length / policy.dt_max - 1e-9))
        if schedule is not None and key in schedule.steps:
            a = engine.run(a, ta, tb, schedule.steps[key])
        elif not policy.adaptive:
            a = engine.run(a, ta, tb, n0)
        else:
            a, n, err = _refine(engine, a, ta, tb, n0, policy)
            if schedule is not None:
                schedule.steps[key] = n
                schedule.errors[key] = err
        _check_margin(a, psi, f"t={tb:g}")
    return psi.replace(a, time_tag=t1)


def _refine(engine, a, ta, tb, n, policy):
    cell = engine.grid.cell

    def dist(u, v):
        return math.sqrt(float(np.vdot(u - v, u - v).real) * cell)

    budget = policy.error_target * abs(tb - ta)
    kin = None
    if policy.relative_target > 0:
        kin = engine.kinetic_only(a, ta, tb)
    coarse = engine.run(a, ta, tb, n)
    history = []
    for _ in range(policy.max_halvings + 1):
        fine = engine.run(a, ta, tb, 2 * n)
        err = dist(fine, coarse) / 3.0
        if kin is not None:
            budget = policy.error_target * abs(tb - ta) + policy.relative_target * dist(fine, kin)
        history.append((2 * n, err))
        if err <= budget:
            log.debug("%s leg [%g, %g]: %d steps, err %.3g", engine.name, ta, tb, 2 * n, err)
            return fine, 2 * n, err
        coarse, n = fine, 2 * n
    raise ConvergenceError(
        f"{engine.name} leg [{ta:g}, {tb:g}] missed error target {budget:.3g} "
        f"after {policy.max_halvings} halvings", report=history)


def _full_engine(model, V, grid):
    r2v = grid.r2_levels[0]
    x2h = r2v / 2.0
    static_V = None
    if V is not None and not V.time_dependent:
        static_V = V.radial(r2v)

    def position_part(t):
        kk = model.k_of_t(t)
        if V is None:
            return None if kk == 0 else kk * x2h
        pot = static_V if static_V is not None else V.factor(t) * V.radial(r2v)
        return kk * x2h + pot if kk != 0 else pot

    return _Engine("full", grid, model.m, lambda ta, tb: tb - ta, position_part)


def kinetic_integral(lam: float, ta: float, tb: float) -> float:
    """Integral of ``|t|**(-2 lam)`` over ``[ta, tb]`` (same-sign endpoints)."""
    s = 1.0 - 2.0 * lam

    def G(t):
        return math.copysign(abs(t) ** s, t) / s

    return G(tb) - G(ta)


def _s_engine(model, V, grid):
    lam = model.lam
    r2v = grid.r2_levels[0]

    def position_part(t):
        if V is None:
            return None
        return V.factor(t) * V.radial(r2v * abs(t) ** (2.0 * lam))

    return _Engine("S", grid, model.m, lambda ta, tb: kinetic_integral(lam, ta, tb), position_part)


def evolve_full(model: OscillatorModel, V: Optional[PotentialSpec], psi: WaveFunction,
                t0: float, t1: float, policy: StepPolicy = StepPolicy(),
                schedule: Optional[Schedule] = None) -> WaveFunction:
    """``U(t1, t0) psi`` for ``p^2/(2m) + k(t) x^2/2 + V(t, x)``.

    Raises ``DomainError`` if the state reaches the edge of the box or of the
    momentum window, ``ConvergenceError`` if a leg cannot meet the budget.
    """
    if t0 == t1:
        return psi.replace(time_tag=t1)
    engine = _full_engine(model, V, psi.grid)
    return _evolve(engine, psi, _breakpoints(model, t0, t1, True), policy, schedule, t1)


def _check_s_interval(model, t0, t1):
    r0 = model.r0
    if not ((t0 >= r0 and t1 >= r0) or (t0 <= -r0 and t1 <= -r0)):
        raise DomainError(f"simplified evolution needs both times on one side with |t| >= r0, got {t0}, {t1}")


def evolve_S(model: OscillatorModel, V: Optional[PotentialSpec], psi: WaveFunction,
             t0: float, t1: float, policy: StepPolicy = StepPolicy(),
             schedule: Optional[Schedule] = None) -> WaveFunction:
    """``U_S(t1, t0) psi`` for ``p^2/(2m |t|^(2 lam)) + V(t, |t|^lam x)``."""
    _check_s_interval(model, t0, t1)
    if t0 == t1:
        return psi.replace(time_tag=t1)
    if V is None:
        return evolve_free_S(model, psi, t0, t1)
    engine = _s_engine(model, V, psi.grid)
    return _evolve(engine, psi, _breakpoints(model, t0, t1, False), policy, schedule, t1)


def evolve_free_S(model: OscillatorModel, psi: WaveFunction, t0: float, t1: float) -> WaveFunction:
    """Exact ``U_S0(t1, t0)``: one Fourier multiplier."""
    _check_s_interval(model, t0, t1)
    if t0 == t1:
        return psi.replace(time_tag=t1)
    kappa = kinetic_integral(model.lam, t0, t1)
    mult = np.exp(-1j * kappa * psi.grid.p2 / (2.0 * model.m))
    return psi.replace(ifftn(mult * fftn(psi.amplitudes)), time_tag=t1)


# Gaussian oracle ----------------------------------------------------------

@dataclass(frozen=True)
class GaussianParams:
    """``exp(logamp + sum_i [-i (x_i - q_i)^2 / (2 Z_i) + i p_i (x_i - q_i)])``.

    A real Gaussian of width ``sigma`` has ``Z = 1j * sigma**2``; the state is
    normalizable while ``Re(1j / Z) > 0``.
    """

    center: np.ndarray
    momentum: np.ndarray
    width: np.ndarray
    logamp: complex

    def __post_init__(self):
        for name in ("center", "momentum"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        w = np.atleast_1d(np.asarray(self.width, dtype=complex))
        w = np.broadcast_to(w, self.center.shape).copy()
        object.__setattr__(self, "width", w)
        if np.any((1j / w).real <= 0):
            raise ValidationError("complex width does not give a normalizable state")


def gaussian_params_from(center, momentum, sigma) -> GaussianParams:
    """Parameters of :func:`make_gaussian`'s state (same phase convention)."""
    center = np.atleast_1d(np.asarray(center, dtype=float))
    momentum = np.broadcast_to(np.asarray(momentum, dtype=float), center.shape)
    n = center.size
    logamp = -0.25 * n * math.log(math.pi * sigma**2) + 1j * float(momentum @ center)
    return GaussianParams(center, momentum, np.full(n, 1j * sigma**2), logamp)


def gaussian_variance(g: GaussianParams) -> np.ndarray:
    """Per-axis position variance."""
    return 1.0 / (2.0 * (1j / g.width).real)


def _q_factor(fs, Z0, t, samples=2049):
    """``zeta1 - zeta2/(m Z0)`` at ``t`` with its square root continued from 1."""
    m = fs.model.m
    ts = np.linspace(0.0, t, samples)
    z1, _ = fs.zeta1(ts)
    z2, _ = fs.zeta2(ts)
    Q = z1[:, None] - (z2 / m)[:, None] / Z0[None, :]
    ang = np.unwrap(np.angle(Q), axis=0)[-1]
    return np.abs(Q[-1]), ang


def evolve_gaussian_exact(fs: FundamentalSolution, m: float, g: GaussianParams, t: float) -> GaussianParams:
    """Transport Gaussian parameters under ``H_0(t)`` from time 0 to ``t``."""
    if t == 0:
        return g
    if abs(m - fs.model.m) > 1e-14 * m:
        raise ValidationError("mass does not match the fundamental solution's model")
    z1, d1 = fs.zeta1(t)
    z2, d2 = fs.zeta2(t)
    a, b, c, d = z1, z2 / m, m * d1, d2
    q, p = g.center, g.momentum
    qt = a * q + b * p
    pt = c * q + d * p
    Z0 = g.width
    Zt = (a * Z0 - b) / (d - c * Z0)
    modQ, angQ = _q_factor(fs, Z0, t)
    logamp = (g.logamp - 0.5 * np.sum(np.log(modQ)) - 0.5j * np.sum(angQ)
              + 0.5j * float(pt @ qt - p @ q))
    return GaussianParams(qt, pt, Zt, complex(logamp))


def gaussian_wavefunction(grid, g: GaussianParams, time_tag: float = 0.0) -> WaveFunction:
    if g.center.size != grid.dim:
        raise ValidationError("Gaussian dimension does not match the grid")
    expo = np.full(grid.shape, g.logamp, dtype=complex)
    for c, q, p, Z in zip(grid.x, g.center, g.momentum, g.width):
        expo = expo + (-0.5j * (c - q) ** 2 / Z + 1j * p * (c - q))
    return WaveFunction(grid, np.exp(expo), time_tag)


# Dressing and factorization -----------------------------------------------

def dressing_apply(model: OscillatorModel, psi: WaveFunction, t: float, inverse: bool = False) -> WaveFunction:
    """``M(t) = exp(i m lam x^2 / (2t)) exp(-i lam log(t) A / 2)`` or its inverse.

    The dilation part stretches the state by ``t**lam``.
    """
    if not t >= model.r0:
        raise DomainError("dressing needs t >= r0")
    lam, m = model.lam, model.m
    beta = 0.5 * lam * math.log(t)
    phase = np.exp(1j * m * lam * psi.grid.r2 / (2.0 * t))
    if inverse:
        return dilate(psi.replace(np.conj(phase) * psi.amplitudes), -beta)
    d = dilate(psi, beta)
    return d.replace(phase * d.amplitudes)


def factorization_residual(model: OscillatorModel, V: Optional[PotentialSpec], psi: WaveFunction,
                           t: float, policy: StepPolicy = StepPolicy()) -> float:
    """``|U(t, r0) psi - M(t) U_S(t, r0) M(r0)^-1 psi|``."""
    r0 = model.r0
    if not t >= r0:
        raise DomainError("factorization needs t >= r0")
    if t == r0:
        return 0.0
    lhs = evolve_full(model, V, psi, r0, t, policy)
    inner = dressing_apply(model, psi, r0, inverse=True)
    mid = evolve_S(model, V, inner, r0, t, policy)
    rhs = dressing_apply(model, mid, t)
    return lhs.distance(rhs)

