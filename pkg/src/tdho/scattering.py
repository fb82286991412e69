"""Wave operators for the simplified dynamics and their completeness checks.

Strong limits are approximated on dyadic horizons ``T_k = r0 * 2**k``. All
interacting evolutions of one run share a :class:`~tdho.propagator.Schedule`,
so the numerical propagator on ``[r0, T_k]`` is the same operator for every
horizon. The Cauchy gap between consecutive horizons then reduces, by
unitarity, to a comparison on the single leg ``[T_k, T_{k+1}]``, which is how
it is computed.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import quad

from .cutoffs import CutoffSpec, cutoff_eval, rho_lambda
from .errors import ConvergenceError, DomainError, PreconditionError
from .grid import WaveFunction, fftn, ifftn
from .oscillator import OscillatorModel
from .potential import PotentialSpec, potential_eval
from .propagator import (
    Schedule,
    StepPolicy,
    dressing_apply,
    evolve_free_S,
    evolve_full,
    evolve_S,
)

__all__ = [
    "potential_eval",
    "low_momentum_mass",
    "cook_integrand",
    "cook_tail",
    "WaveOpReport",
    "RangeReport",
    "RangeCutoffs",
    "wave_operator_forward",
    "wave_operator_inverse",
    "range_membership",
    "range_defects",
    "completeness_roundtrip",
    "RoundTripReport",
    "compose_full_wave_operator",
    "direct_full_wave_operator",
    "scattering_policy",
]

log = logging.getLogger(__name__)

_ADMISSIBLE_MASS = 1e-10


def scattering_policy() -> StepPolicy:
    """Step policy tight enough that late-leg engine error sits far below the
    dyadic Cook bounds."""
    return StepPolicy(dt_max=0.25, error_target=1e-13, relative_target=1e-7, max_halvings=16)


@dataclass(frozen=True)
class RangeCutoffs:
    """``(kappa1, R1, kappa2)`` for the momentum and position range tests."""

    kappa1: float = 0.05
    R1: float = 16.0
    kappa2: float = 0.05

    @property
    def phi1(self) -> CutoffSpec:
        return CutoffSpec.phi1(self.kappa1, self.R1)

    @property
    def phi2(self) -> CutoffSpec:
        return CutoffSpec.phi2(self.kappa2)


def low_momentum_mass(psi: WaveFunction, eps0: float) -> float:
    """Relative spectral mass at ``|p| < eps0``."""
    s = np.abs(psi.spectrum()) ** 2
    tot = s.sum()
    if tot == 0:
        return 0.0
    return float(s[np.sqrt(psi.grid.p2) < eps0].sum() / tot)


def _admissible(psi, eps0):
    mass = low_momentum_mass(psi, eps0)
    if mass > _ADMISSIBLE_MASS:
        raise PreconditionError(f"spectral mass {mass:.3g} below |p| = {eps0:g} exceeds {_ADMISSIBLE_MASS:g}")


def cook_integrand(model: OscillatorModel, spec: Optional[PotentialSpec], psi: WaveFunction,
                   t: float, eps0: Optional[float] = None) -> float:
    """``|V(t, t**lam x) U_S0(t, r0) psi|``.

    ``eps0`` (default ``kappa1/2`` with the default cutoffs) gates the call:
    a state with spectral mass near ``p = 0`` raises ``PreconditionError``.
    """
    _admissible(psi, RangeCutoffs().kappa1 / 2 if eps0 is None else eps0)
    if spec is None:
        return 0.0
    chi = evolve_free_S(model, psi, model.r0, t)
    vals = potential_eval(spec, t, psi.grid.x, scaled=True) * chi.amplitudes
    return math.sqrt(float(np.vdot(vals, vals).real) * psi.grid.cell)


def cook_tail(model, spec, psi, a: float, b: float, rtol: float = 1e-10) -> tuple:
    """``(integral, quadrature error)`` of the Cook integrand over ``[a, b]``."""
    if spec is None:
        return 0.0, 0.0
    _admissible(psi, RangeCutoffs().kappa1 / 2)
    g = psi.grid
    base = fftn(psi.amplitudes)
    p2h = g.p2 / (2.0 * model.m)
    s = 1.0 - 2.0 * model.lam

    def f(t):
        kappa = (t**s - model.r0**s) / s
        chi = ifftn(np.exp(-1j * kappa * p2h) * base)
        vals = potential_eval(spec, t, g.x, scaled=True) * chi
        return math.sqrt(float(np.vdot(vals, vals).real) * g.cell)

    val, err = quad(f, a, b, epsabs=0.0, epsrel=rtol, limit=200)
    return val, err


@dataclass
class WaveOpReport:
    """Horizon-doubling record of a strong-limit approximation.

    ``cauchy_gaps[k]`` compares horizons ``k`` and ``k + 1``; ``result`` is
    the approximant at the last horizon.
    """

    horizons: list
    cauchy_gaps: list
    result: WaveFunction
    converged: bool
    schedule: Schedule = field(repr=False, default_factory=Schedule)
    defects: Optional["RangeReport"] = None

    @property
    def final_gap(self) -> float:
        return self.cauchy_gaps[-1] if self.cauchy_gaps else 0.0


def _dyadic(model, k):
    return model.r0 * 2.0**k


def wave_operator_forward(model: OscillatorModel, spec: Optional[PotentialSpec], psi: WaveFunction,
                          tol: float = 1e-4, policy: Optional[StepPolicy] = None, k_max: int = 10,
                          k_min: int = 1, schedule: Optional[Schedule] = None,
                          eps0: Optional[float] = None) -> WaveOpReport:
    """``U_S(T, r0)^* U_S0(T, r0) psi`` on horizons ``T = r0 * 2**k``.

    Stops at the first ``k >= k_min`` whose gap is at most ``tol``. Raises
    ``ConvergenceError`` (carrying the report) if ``k_max`` is reached first.
    """
    policy = policy or scattering_policy()
    schedule = schedule if schedule is not None else Schedule()
    _admissible(psi, RangeCutoffs().kappa1 / 2 if eps0 is None else eps0)
    r0 = model.r0
    horizons = [r0]
    gaps = []
    converged = False
    chi_prev = psi
    for k in range(1, k_max + 1):
        T_prev, T = horizons[-1], _dyadic(model, k)
        chi = evolve_free_S(model, psi, r0, T)
        back = evolve_S(model, spec, chi, T, T_prev, policy, schedule)
        gaps.append(back.distance(chi_prev))
        horizons.append(T)
        log.info("forward horizon %g gap %.3e", T, gaps[-1])
        chi_prev = chi
        if k >= k_min and gaps[-1] <= tol:
            converged = True
            break
    result = evolve_S(model, spec, chi_prev, horizons[-1], r0, policy, schedule)
    report = WaveOpReport(horizons, gaps, result.replace(time_tag=r0), converged, schedule)
    if not converged:
        raise ConvergenceError(f"forward wave operator not converged by T={horizons[-1]:g}", report)
    return report


@dataclass
class RangeReport:
    times: list
    w1_defect: list
    w2_defect: list
    tol: float
    norm: float = 1.0

    @property
    def member(self) -> bool:
        """Both defects below ``tol`` at the end and nonincreasing over the last three samples."""
        if not self.times:
            return False
        for seq in (self.w1_defect, self.w2_defect):
            if seq[-1] > self.tol:
                return False
            tail = seq[-3:]
            slack = 1e-12 * max(self.norm, 1e-300)
            if any(b > a + slack for a, b in zip(tail[:-1], tail[1:])):
                return False
        return True

    @property
    def verdict(self) -> str:
        return "member" if self.member else "non-member"


def range_defects(model, state: WaveFunction, t: float, cutoffs: RangeCutoffs) -> tuple:
    """``(|(1 - phi1(p^2)) u|, |(1 - phi2(x^2 / t**(2 rho_lam))) u|)`` for ``u = state``."""
    g = state.grid
    a = state.amplitudes
    w1 = ifftn((1.0 - cutoff_eval(cutoffs.phi1, g.p2)) * fftn(a))
    rl = rho_lambda(model.lam)
    w2 = (1.0 - cutoff_eval(cutoffs.phi2, g.r2 / t ** (2.0 * rl))) * a
    return (math.sqrt(float(np.vdot(w1, w1).real) * g.cell),
            math.sqrt(float(np.vdot(w2, w2).real) * g.cell))


def range_membership(model: OscillatorModel, spec: Optional[PotentialSpec], psi: WaveFunction,
                     cutoffs: RangeCutoffs = RangeCutoffs(), horizons=None, tol: float = 1e-3,
                     policy: Optional[StepPolicy] = None, schedule: Optional[Schedule] = None) -> RangeReport:
    """Evaluate both range defects of ``U_S(t, r0) psi`` along ``horizons``.

    Never raises on non-membership; the verdict is in the report.
    """
    policy = policy or scattering_policy()
    if horizons is None:
        horizons = [_dyadic(model, k) for k in range(0, 9)]
    horizons = sorted(float(t) for t in horizons)
    if horizons and horizons[0] < model.r0:
        raise DomainError("range samples must be >= r0")
    report = RangeReport([], [], [], tol, psi.norm())
    state, t_prev = psi, model.r0
    for t in horizons:
        state = evolve_S(model, spec, state, t_prev, t, policy, schedule)
        t_prev = t
        d1, d2 = range_defects(model, state, t, cutoffs)
        report.times.append(t)
        report.w1_defect.append(d1)
        report.w2_defect.append(d2)
    return report


def wave_operator_inverse(model: OscillatorModel, spec: Optional[PotentialSpec], phi: WaveFunction,
                          tol: float = 1e-4, policy: Optional[StepPolicy] = None, k_max: int = 10,
                          k_min: int = 1, schedule: Optional[Schedule] = None,
                          cutoffs: RangeCutoffs = RangeCutoffs(), membership_tol: float = 1e-3) -> WaveOpReport:
    """``U_S0(T, r0)^* U_S(T, r0) phi`` on horizons ``T = r0 * 2**k``.

    The interacting state is carried forward leg by leg; range defects are
    recorded at every horizon and a warning is logged if ``phi`` does not look
    like a member of the scattering range.
    """
    policy = policy or scattering_policy()
    schedule = schedule if schedule is not None else Schedule()
    r0 = model.r0
    horizons = [r0]
    gaps = []
    converged = False
    state = phi
    prev = phi
    d1, d2 = range_defects(model, phi, r0, cutoffs)
    defects = RangeReport([r0], [d1], [d2], membership_tol, phi.norm())
    for k in range(1, k_max + 1):
        T = _dyadic(model, k)
        state = evolve_S(model, spec, state, horizons[-1], T, policy, schedule)
        pulled = evolve_free_S(model, state, T, r0)
        gaps.append(pulled.distance(prev))
        horizons.append(T)
        d1, d2 = range_defects(model, state, T, cutoffs)
        defects.times.append(T)
        defects.w1_defect.append(d1)
        defects.w2_defect.append(d2)
        log.info("inverse horizon %g gap %.3e", T, gaps[-1])
        prev = pulled
        if k >= k_min and gaps[-1] <= tol:
            converged = True
            break
    if not defects.member:
        log.warning("state does not pass the range test (final defects %.3g, %.3g)",
                    defects.w1_defect[-1], defects.w2_defect[-1])
    report = WaveOpReport(horizons, gaps, prev.replace(time_tag=r0), converged, schedule, defects)
    if not converged:
        raise ConvergenceError(f"inverse wave operator not converged by T={horizons[-1]:g}", report)
    return report


@dataclass
class RoundTripReport:
    forward_gap: float
    membership: RangeReport
    back_gap: float
    roundtrip_error: float
    forward: WaveOpReport = field(repr=False, default=None)
    inverse: WaveOpReport = field(repr=False, default=None)


def completeness_roundtrip(model: OscillatorModel, spec: Optional[PotentialSpec], psi: WaveFunction,
                           tol: float = 1e-4, policy: Optional[StepPolicy] = None, k_max: int = 10,
                           k_min: int = 1, cutoffs: RangeCutoffs = RangeCutoffs(),
                           membership_tol: float = 1e-3, share_mesh: bool = False) -> RoundTripReport:
    """Apply the forward wave operator, test the range of the result, pull it back.

    By default the inverse builds its own mesh, so the round trip measures the
    two engines' combined error rather than the exact invertibility of one
    shared Strang mesh.
    """
    fwd = wave_operator_forward(model, spec, psi, tol, policy, k_max, k_min)
    phi = fwd.result
    inv = wave_operator_inverse(model, spec, phi, tol, policy, k_max, k_min,
                                fwd.schedule if share_mesh else None, cutoffs, membership_tol)
    return RoundTripReport(
        forward_gap=fwd.final_gap,
        membership=inv.defects,
        back_gap=inv.final_gap,
        roundtrip_error=inv.result.distance(psi),
        forward=fwd,
        inverse=inv,
    )


def compose_full_wave_operator(model: OscillatorModel, spec: Optional[PotentialSpec], psi: WaveFunction,
                               tol: float = 1e-4, policy: Optional[StepPolicy] = None, k_max: int = 10,
                               k_min: int = 1, full_policy: Optional[StepPolicy] = None) -> WaveFunction:
    """``U(r0, 0)^* M(r0) W_S M(r0)^-1 U_0(r0, 0) psi``."""
    full_policy = full_policy or StepPolicy(dt_max=0.01, error_target=1e-9)
    r0 = model.r0
    u = evolve_full(model, None, psi, 0.0, r0, full_policy)
    u = dressing_apply(model, u, r0, inverse=True)
    w = wave_operator_forward(model, spec, u.replace(time_tag=r0), tol, policy, k_max, k_min).result
    w = dressing_apply(model, w, r0)
    return evolve_full(model, spec, w, r0, 0.0, full_policy).replace(time_tag=0.0)


def direct_full_wave_operator(model: OscillatorModel, spec: Optional[PotentialSpec], psi: WaveFunction,
                              T: float, policy: Optional[StepPolicy] = None) -> WaveFunction:
    """``U(T, 0)^* U_0(T, 0) psi`` evolved directly in the original frame."""
    policy = policy or StepPolicy(dt_max=0.01, error_target=1e-9)
    free = evolve_full(model, None, psi, 0.0, T, policy)
    return evolve_full(model, spec, free, T, 0.0, policy).replace(time_tag=0.0)
