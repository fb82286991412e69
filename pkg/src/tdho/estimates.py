"""Propagation estimates sampled along simplified trajectories.

Integrals of the form ``int_{r0}^{T} |A(t) U_S(t, r0) psi|^2 dt/t`` are
sampled on a geometric time grid and integrated with the trapezoid rule in
``u = log t``. Boundedness is checked empirically as stability of the partial
integral under doubling of ``T``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .cutoffs import CutoffSpec, cutoff_eval
from .errors import FitError, ValidationError
from .grid import WaveFunction, fftn, ifftn
from .oscillator import OscillatorModel
from .potential import PotentialSpec, potential_eval
from .propagator import StepPolicy, evolve_S

__all__ = [
    "EstimateConfig",
    "IntegralSeries",
    "ProfileSeries",
    "FitResult",
    "sample_times",
    "estimate_series",
    "large_velocity_integral",
    "middle_velocity_integral",
    "minimal_velocity_profile",
    "free_min_velocity_decay",
    "commutator_decay_probe",
    "fit_power_law",
    "estimates_policy",
]


def estimates_policy() -> StepPolicy:
    return StepPolicy(dt_max=0.25, error_target=1e-7, max_halvings=16)


@dataclass(frozen=True)
class EstimateConfig:
    """Cutoff numbers for the propagation estimates of one oscillator model.

    ``theta`` and ``eps4`` are derived. ``eps5=None`` picks the midpoint of
    its admissible interval ``(3 eps + eps2, kappa1 / (m (1 - 2 lam) sqrt(R1)))``.
    """

    m: float
    lam: float
    r0: float = 1.0
    kappa1: float = 0.05
    R1: float = 16.0
    kappa2: float = 0.05
    eps: float = 0.01
    eta0: float = 1.0
    eps2: float = 0.05
    eps3: float = 0.03
    eps5: Optional[float] = None
    T_max: float = 1024.0
    per_octave: int = 8

    def __post_init__(self):
        if not (self.eps > 0 and self.eta0 > 0 and self.kappa1 > 0 and self.kappa2 > 0):
            raise ValidationError("eps, eta0, kappa1 and kappa2 must be positive")
        if not self.R1 > 4 * self.kappa1:
            raise ValidationError("need R1 > 4 kappa1")
        if not self.eps2 > self.eps:
            raise ValidationError("need eps2 > eps")
        if not self.eps3 > 2 * self.eps:
            raise ValidationError("need eps3 > 2 eps")
        lo, hi = self.eps5_bounds
        if not lo < hi:
            raise ValidationError(
                f"no admissible eps5: lower bound {lo:.6g} >= upper bound {hi:.6g}; "
                "reduce eps/eps2 or the mass")
        if self.eps5 is None:
            object.__setattr__(self, "eps5", 0.5 * (lo + hi))
        elif not lo < self.eps5 < hi:
            raise ValidationError(f"eps5={self.eps5!r} outside ({lo:.6g}, {hi:.6g})")
        if not self.T_max > self.r0:
            raise ValidationError("T_max must exceed r0")
        if self.per_octave < 1:
            raise ValidationError("per_octave must be >= 1")

    @classmethod
    def for_model(cls, model: OscillatorModel, **kw) -> "EstimateConfig":
        return cls(m=model.m, lam=model.lam, r0=model.r0, **kw)

    @property
    def s(self) -> float:
        return 1.0 - 2.0 * self.lam

    @property
    def theta(self) -> float:
        return 2.0 * math.sqrt(self.R1) / (self.m * self.s)

    @property
    def eps4(self) -> float:
        return self.eps3 + self.eps

    @property
    def eps5_bounds(self) -> tuple:
        return 3 * self.eps + self.eps2, self.kappa1 / (self.m * self.s * math.sqrt(self.R1))

    @property
    def phi1(self) -> CutoffSpec:
        return CutoffSpec.phi1(self.kappa1, self.R1)

    @property
    def large_window(self) -> CutoffSpec:
        return CutoffSpec.window(self.theta, self.theta + self.eta0, self.eps)

    @property
    def middle_window(self) -> CutoffSpec:
        return CutoffSpec.window(self.eps2, self.theta + self.eps3, self.eps)

    @property
    def minimal_cutoff(self) -> CutoffSpec:
        return CutoffSpec.le(self.eps5, self.eps)


def sample_times(r0: float, T_max: float, per_octave: int) -> np.ndarray:
    """Geometric grid from ``r0`` to ``T_max`` with ``per_octave`` steps per doubling."""
    n = max(1, round(per_octave * math.log2(T_max / r0)))
    out = r0 * (T_max / r0) ** (np.arange(n + 1) / n)
    # snap whole octaves so they coincide with the propagator's leg cuts
    k = np.round(np.log2(out / r0))
    snap = np.isclose(out, r0 * np.exp2(k), rtol=1e-12, atol=0)
    out[snap] = r0 * np.exp2(k[snap])
    out[-1] = T_max
    return out


@dataclass
class IntegralSeries:
    """Sampled integrand and its partial integrals against ``dt/t``."""

    times: np.ndarray
    integrand: np.ndarray
    partial: np.ndarray = field(init=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.integrand = np.asarray(self.integrand, dtype=float)
        self.partial = cumulative_trapezoid(self.integrand, np.log(self.times), initial=0.0)
        # trapezoid of a nonnegative integrand is nondecreasing; clip roundoff
        self.partial = np.maximum.accumulate(self.partial)

    @property
    def bound_estimate(self) -> float:
        return float(self.partial[-1]) if self.partial.size else 0.0

    def partial_at(self, T: float) -> float:
        idx = np.flatnonzero(np.isclose(self.times, T, rtol=1e-12))
        if idx.size == 0:
            raise ValueError(f"{T} is not a sample time")
        return float(self.partial[idx[0]])

    def doubling_change(self, T: float) -> float:
        """Relative change of the partial integral from ``T`` to ``2T``.

        Returns 0 when both partials vanish to double precision.
        """
        a, b = self.partial_at(T), self.partial_at(2 * T)
        if b == 0 and a == 0:
            return 0.0
        return abs(b - a) / max(abs(b), abs(a))

    def rows(self):
        return zip(self.times, self.integrand, self.partial)


@dataclass
class ProfileSeries:
    """Sequence of defect norms with the decay verdict."""

    times: np.ndarray
    values: np.ndarray
    tol: float
    floor: float = 1e-6

    @property
    def decaying(self) -> bool:
        """Last three samples are under ``tol`` and either decrease or sit below ``floor``."""
        v = self.values
        if v.size < 3:
            return False
        last = v[-3:]
        if np.any(last > self.tol):
            return False
        return bool(np.all(last <= self.floor) or (last[2] < last[1] < last[0]))

    @property
    def verdict(self) -> str:
        if np.all(self.values == 0):
            return "zero"
        return "decaying" if self.decaying else "not decaying"


def _norm2(a, cell):
    return float(np.vdot(a, a).real) * cell


def _velocity(grid, t, s):
    return np.sqrt(grid.r2) / t**s


def estimate_series(model: OscillatorModel, spec: Optional[PotentialSpec], psi: WaveFunction,
                    cfg: EstimateConfig, policy: Optional[StepPolicy] = None,
                    which=("large", "middle", "minimal"), times=None) -> dict:
    """Sample the requested estimates along one trajectory ``U_S(t, r0) psi``."""
    policy = policy or estimates_policy()
    if times is None:
        times = sample_times(model.r0, cfg.T_max, cfg.per_octave)
    g = psi.grid
    s = cfg.s
    c_m = model.m * s
    phi1 = cutoff_eval(cfg.phi1, g.p2)
    out = {w: [] for w in which}
    state, t_prev = psi, model.r0
    for t in times:
        if t != t_prev:
            state = evolve_S(model, spec, state, t_prev, t, policy)
        t_prev = t
        a = state.amplitudes
        vel = _velocity(g, t, s)
        if "large" in which or "middle" in which:
            loc = ifftn(phi1 * fftn(a))
        if "large" in which:
            w = cutoff_eval(cfg.large_window, vel) * loc
            out["large"].append(_norm2(w, g.cell))
        if "middle" in which:
            w = cutoff_eval(cfg.middle_window, vel) * loc
            fw = fftn(w)
            tot = 0.0
            for xi, pi in zip(g.x, g.p):
                comp = ifftn(pi * fw) - (c_m / t**s) * xi * w
                tot += _norm2(comp, g.cell)
            out["middle"].append(tot)
        if "minimal" in which:
            w = cutoff_eval(cfg.minimal_cutoff, vel) * a
            out["minimal"].append(math.sqrt(_norm2(w, g.cell)))
    res = {}
    for key, vals in out.items():
        if key == "minimal":
            res[key] = ProfileSeries(np.asarray(times), np.asarray(vals), tol=1e-3)
        else:
            res[key] = IntegralSeries(times, vals)
    return res


def large_velocity_integral(model, spec, psi, cfg: EstimateConfig, policy=None) -> IntegralSeries:
    """``int |F(theta <= |x|/t^(1-2lam) <= theta + eta0) phi1(p^2) U_S psi|^2 dt/t``."""
    return estimate_series(model, spec, psi, cfg, policy, which=("large",))["large"]


def middle_velocity_integral(model, spec, psi, cfg: EstimateConfig, policy=None) -> IntegralSeries:
    """``int |(p - m(1-2lam) x / t^(1-2lam)) F(eps2 <= |x|/t^(1-2lam) <= theta + eps3) phi1(p^2) U_S psi|^2 dt/t``."""
    return estimate_series(model, spec, psi, cfg, policy, which=("middle",))["middle"]


def minimal_velocity_profile(model, spec, psi, cfg: EstimateConfig, policy=None, tol: float = 1e-3,
                             times=None) -> ProfileSeries:
    """``|F(|x|/t^(1-2lam) <= eps5) U_S(t, r0) psi|`` along the sample grid."""
    prof = estimate_series(model, spec, psi, cfg, policy, which=("minimal",), times=times)["minimal"]
    prof.tol = tol
    return prof


@dataclass
class FitResult:
    slope: float
    intercept: float
    times: np.ndarray
    values: np.ndarray
    used: np.ndarray

    def predict(self, t):
        return np.exp(self.intercept) * np.asarray(t) ** self.slope


def fit_power_law(times, values, floor: float = 1e-13, min_points: int = 3) -> FitResult:
    """Least-squares slope of ``log values`` against ``log times``.

    Samples at or below ``floor`` are dropped; ``FitError`` if fewer than
    ``min_points`` remain.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    used = values > floor
    if used.sum() < min_points:
        raise FitError(f"only {int(used.sum())} samples above the floor {floor:g}")
    slope, icpt = np.polyfit(np.log(times[used]), np.log(values[used]), 1)
    return FitResult(float(slope), float(icpt), times, values, used)


def free_min_velocity_decay(model: OscillatorModel, psi: WaveFunction, eps0: float, times=None,
                            smoothing: float = 0.25, floor: float = 1e-13) -> FitResult:
    """Decay of ``|F(|x|/t^(1-2lam) <= eps0/(m(1-2lam))) U_S0(t, r0) psi|`` in ``t``.

    The sharp indicator is replaced by a smooth cutoff whose transition band
    is the top ``smoothing`` fraction of the threshold.
    """
    if times is None:
        times = sample_times(4.0 * model.r0, 512.0 * model.r0, 4)
    s = 1.0 - 2.0 * model.lam
    thr = eps0 / (model.m * s)
    cut = CutoffSpec.le(thr, smoothing * thr)
    g = psi.grid
    base = fftn(psi.amplitudes)
    p2h = g.p2 / (2.0 * model.m)
    vals = []
    for t in times:
        kappa = (t**s - model.r0**s) / s
        u = ifftn(np.exp(-1j * kappa * p2h) * base)
        w = cutoff_eval(cut, _velocity(g, t, s)) * u
        vals.append(math.sqrt(_norm2(w, g.cell)))
    return fit_power_law(times, vals, floor=floor * max(psi.norm(), 1e-300))


def commutator_decay_probe(model: OscillatorModel, spec: Optional[PotentialSpec], h: CutoffSpec,
                           rho_probe: float, psi: WaveFunction, times, cfg: Optional[EstimateConfig] = None,
                           kind: str = "potential", floor: float = 1e-13) -> FitResult:
    """Fit the decay exponent of a commutator norm in ``t``.

    ``kind="potential"``: ``|h(|x|/t^rho) [V(t, t^lam x), phi1(p^2)] psi|``.
    ``kind="cutoff"``: ``|[h(|x|/t^rho), phi1(p^2)] psi|``.
    Returns all-zero values (and slope 0) when the commutator vanishes identically.
    """
    if kind not in ("potential", "cutoff"):
        raise ValueError(f"unknown probe kind {kind!r}")
    cfg = cfg or EstimateConfig.for_model(model)
    g = psi.grid
    a = psi.amplitudes
    phi1 = cutoff_eval(cfg.phi1, g.p2)

    def P(f):
        return ifftn(phi1 * fftn(f))

    Pa = P(a)
    vals = []
    for t in times:
        hx = cutoff_eval(h, np.sqrt(g.r2) / t**rho_probe)
        if kind == "cutoff":
            comm = hx * Pa - P(hx * a)
        else:
            if spec is None:
                vals.append(0.0)
                continue
            Vs = potential_eval(spec, t, g.x, scaled=True)
            comm = hx * (Vs * Pa - P(Vs * a))
        vals.append(math.sqrt(_norm2(comm, g.cell)))
    vals = np.asarray(vals)
    if np.all(vals == 0):
        return FitResult(0.0, -np.inf, np.asarray(times, dtype=float), vals, np.zeros(vals.size, bool))
    return fit_power_law(times, vals, floor=floor * max(psi.norm(), 1e-300))
