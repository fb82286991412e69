"""Classical layer: coefficient profiles, the exponent lambda, fundamental
solutions of ``zeta'' + (k(t)/m) zeta = 0`` and the classical flow.

For ``|t| > r0`` the coefficient is ``k / t**2`` and both ``|t|**lam`` and
``|t|**(1 - lam)`` solve the equation, so every solution is a power-law
combination there. Tails are always evaluated in that closed form; only the
inner interval ``[-r0, r0]`` is ever integrated numerically.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Union

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ConvergenceError, DomainError, IntegrationError, ValidationError

__all__ = [
    "ConstantK0",
    "Tabulated",
    "OscillatorModel",
    "FundamentalSolution",
    "ClassicalState",
    "lambda_exponent",
    "solve_fundamental",
    "matching_coefficients",
    "classical_flow",
    "asymptotic_coefficients",
    "integrate_fundamental",
]


def lambda_exponent(m: float, k: float) -> float:
    """Smaller root of ``lam*(lam - 1) + k/m = 0``.

    Raises
    ------
    DomainError
        Unless ``m > 0`` and ``0 < k < m/4``.
    """
    if not m > 0:
        raise DomainError(f"mass must be positive, got {m!r}")
    if not 0 < k < m / 4:
        raise DomainError(f"tail coefficient must satisfy 0 < k < m/4, got k={k!r}, m={m!r}")
    disc = math.sqrt(1.0 - 4.0 * k / m)
    # 2k/m / (1 + disc) == (1 - disc)/2 without cancellation for small k
    return (2.0 * k / m) / (1.0 + disc)


@dataclass(frozen=True)
class ConstantK0:
    """Inner profile ``k(t) = k0`` on ``[-r0, r0]``."""

    k0: float = 0.0

    def __post_init__(self):
        if not (self.k0 >= 0 and math.isfinite(self.k0)):
            raise ValidationError(f"k0 must be finite and >= 0, got {self.k0!r}")


@dataclass(frozen=True)
class Tabulated:
    """Inner profile given by a bounded callable ``k_c`` on ``[-r0, r0]``."""

    k_c: Callable[[float], float]


InnerProfile = Union[ConstantK0, Tabulated]


@dataclass(frozen=True)
class OscillatorModel:
    """Time-decaying harmonic coefficient ``k(t)`` with mass ``m``.

    ``k(t)`` is the inner profile for ``|t| <= r0`` and ``k * t**-2`` beyond.
    """

    m: float
    k: float
    r0: float
    inner: InnerProfile = field(default_factory=ConstantK0)

    def __post_init__(self):
        if not self.r0 > 0:
            raise ValidationError(f"r0 must be positive, got {self.r0!r}")
        try:
            lam = lambda_exponent(self.m, self.k)
        except DomainError as exc:
            raise ValidationError(str(exc)) from exc
        object.__setattr__(self, "_lam", lam)

    @property
    def lam(self) -> float:
        return self._lam

    @property
    def omega0(self) -> float:
        if not isinstance(self.inner, ConstantK0):
            raise AttributeError("omega0 is only defined for a ConstantK0 inner profile")
        return math.sqrt(self.inner.k0 / self.m)

    def k_of_t(self, t):
        """Coefficient ``k(t)``; accepts scalars or arrays."""
        t = np.asarray(t, dtype=float)
        inside = np.abs(t) <= self.r0
        with np.errstate(divide="ignore"):
            tail = self.k / np.where(inside, 1.0, t * t)
        if isinstance(self.inner, ConstantK0):
            inner = np.full_like(t, self.inner.k0)
        else:
            inner = np.vectorize(self.inner.k_c, otypes=[float])(np.where(inside, t, 0.0))
        out = np.where(inside, inner, tail)
        return out.item() if out.ndim == 0 else out

    @classmethod
    def from_exponent(cls, m=1.0, lam=0.25, r0=1.0, k0=0.0) -> "OscillatorModel":
        """Piecewise model with constant ``k0`` inside and exponent ``lam`` outside."""
        return cls(m=m, k=m * lam * (1.0 - lam), r0=r0, inner=ConstantK0(k0))


@dataclass(frozen=True)
class ClassicalState:
    x0: np.ndarray
    p0: np.ndarray

    def __post_init__(self):
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        p0 = np.atleast_1d(np.asarray(self.p0, dtype=float))
        if x0.shape != p0.shape:
            raise ValidationError("position and momentum must have the same shape")
        if not (np.all(np.isfinite(x0)) and np.all(np.isfinite(p0))):
            raise ValidationError("classical state must have finite entries")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "p0", p0)


def _tail_basis(r, lam):
    """Values and derivatives of ``r**(1-lam)`` and ``r**lam`` at ``r > 0``."""
    return (r ** (1 - lam), r**lam, (1 - lam) * r ** (-lam), lam * r ** (lam - 1))


def _match_tail(value, deriv, r0, lam):
    """Coefficients ``(a, b)`` of ``a r**(1-lam) + b r**lam`` matching value and
    derivative (with respect to ``r``) at ``r0``."""
    u, v, du, dv = _tail_basis(r0, lam)
    det = u * dv - v * du  # == 2*lam - 1
    a = (value * dv - deriv * v) / det
    b = (u * deriv - du * value) / det
    return a, b


def matching_coefficients(model: OscillatorModel):
    """Tail coefficients ``(c1, c2, c3, c4)`` for a constant inner profile.

    For ``t > r0``: ``zeta1 = c1 t**(1-lam) + c2 t**lam`` and
    ``zeta2 = c3 t**(1-lam) + c4 t**lam``; the ``k0 = 0`` limit is taken
    through ``sin(w r0)/w -> r0``.
    """
    if not isinstance(model.inner, ConstantK0):
        raise ValidationError("matching_coefficients requires a ConstantK0 inner profile")
    lam, r0, w = model.lam, model.r0, model.omega0
    cos_, sin_ = math.cos(w * r0), math.sin(w * r0)
    sinc_r0 = r0 * float(np.sinc(w * r0 / math.pi))  # sin(w r0)/w
    w_sin = w * sin_
    s = 1.0 - 2.0 * lam
    c1 = (-lam * cos_ - r0 * w_sin) / (r0 ** (1 - lam) * s)
    c2 = ((1 - lam) * cos_ + r0 * w_sin) / (r0**lam * s)
    c3 = (r0 * cos_ - lam * sinc_r0) / (r0 ** (1 - lam) * s)
    c4 = (-r0 * cos_ + (1 - lam) * sinc_r0) / (r0**lam * s)
    return c1, c2, c3, c4


@dataclass(frozen=True)
class FundamentalSolution:
    """The pair ``zeta1``, ``zeta2`` on ``[-t_max, t_max]``.

    ``zeta1(t)`` and ``zeta2(t)`` return ``(value, derivative)``; both accept
    arrays. ``c1..c4`` are the tail coefficients for ``t > r0``;
    ``negative_coefficients`` holds the same four numbers for ``t < -r0`` in the
    convention ``zeta1 = c1|t|**(1-lam) + c2|t|**lam`` and
    ``zeta2 = (c3|t|**(1-lam) + c4|t|**lam) sign(t)``.
    """

    model: OscillatorModel
    t_max: float
    zeta1: Callable
    zeta2: Callable
    c1: float
    c2: float
    c3: float
    c4: float
    negative_coefficients: tuple
    method: str

    @property
    def coefficients(self):
        return (self.c1, self.c2, self.c3, self.c4)

    @property
    def lam(self):
        return self.model.lam

    def wronskian(self, t):
        z1, d1 = self.zeta1(t)
        z2, d2 = self.zeta2(t)
        return z1 * d2 - d1 * z2

    def flow_matrix(self, t):
        """``[[zeta1, zeta2/m], [m zeta1', zeta2']]`` acting on ``(x, p)``."""
        m = self.model.m
        z1, d1 = self.zeta1(t)
        z2, d2 = self.zeta2(t)
        return np.array([[z1, z2 / m], [m * d1, d2]])


def _inner_ode(model, t_end, tol):
    """Integrate both fundamental solutions from 0 to ``t_end`` inside ``[-r0, r0]``."""
    m = model.m
    kfun = model.k_of_t

    def rhs(t, y):
        kk = kfun(t) / m
        return [y[1], -kk * y[0], y[3], -kk * y[2]]

    sol = solve_ivp(
        rhs, (0.0, t_end), [1.0, 0.0, 0.0, 1.0], method="DOP853",
        rtol=tol, atol=tol, dense_output=True,
    )
    if sol.status != 0:
        raise IntegrationError(f"inner integration failed: {sol.message}")
    return sol


def _build(model, t_max, inner_pos, inner_neg, method):
    """Assemble zeta callables from inner evaluators and matched tails.

    ``inner_pos(t)`` / ``inner_neg(t)`` return arrays ``(z1, d1, z2, d2)``.
    """
    lam, r0 = model.lam, model.r0
    z1p, d1p, z2p, d2p = inner_pos(np.array([r0]))
    z1n, d1n, z2n, d2n = inner_neg(np.array([-r0]))
    # derivative with respect to r = |t| is minus the t-derivative for t < 0
    pos = _match_tail(z1p[0], d1p[0], r0, lam) + _match_tail(z2p[0], d2p[0], r0, lam)
    a1, b1 = _match_tail(z1n[0], -d1n[0], r0, lam)
    a2, b2 = _match_tail(z2n[0], -d2n[0], r0, lam)
    neg = (a1, b1, -a2, -b2)

    def evaluate(t, which):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        if np.any(np.abs(t) > t_max * (1 + 1e-12)):
            raise DomainError(f"t outside validity interval [-{t_max}, {t_max}]")
        val = np.empty_like(t)
        der = np.empty_like(t)
        ip = (t >= 0) & (t <= r0)
        ineg = (t < 0) & (t >= -r0)
        tp = t > r0
        tn = t < -r0
        if ip.any():
            res = inner_pos(t[ip])
            val[ip], der[ip] = res[2 * which], res[2 * which + 1]
        if ineg.any():
            res = inner_neg(t[ineg])
            val[ineg], der[ineg] = res[2 * which], res[2 * which + 1]
        for mask, coeffs, sgn in ((tp, pos, 1.0), (tn, neg, -1.0)):
            if not mask.any():
                continue
            a, b = coeffs[2 * which], coeffs[2 * which + 1]
            r = np.abs(t[mask])
            u, v, du, dv = _tail_basis(r, lam)
            # zeta2 carries sign(t) on the negative branch
            sign_val = sgn if (which == 1 and sgn < 0) else 1.0
            val[mask] = sign_val * (a * u + b * v)
            der[mask] = sign_val * sgn * (a * du + b * dv)
        if scalar:
            return float(val[0]), float(der[0])
        return val, der

    return FundamentalSolution(
        model=model, t_max=float(t_max),
        zeta1=lambda t: evaluate(t, 0), zeta2=lambda t: evaluate(t, 1),
        c1=pos[0], c2=pos[1], c3=pos[2], c4=pos[3],
        negative_coefficients=neg, method=method,
    )


def solve_fundamental(model: OscillatorModel, t_max: float, tol: float = 1e-12,
                      method: str = "auto") -> FundamentalSolution:
    """Fundamental solutions on ``[-t_max, t_max]``.

    ``method="closed"`` uses cos/sin inside (constant inner profile only);
    ``"ode"`` integrates the inner interval with an embedded Runge-Kutta pair
    at absolute and relative tolerance ``tol``; ``"auto"`` picks ``closed``
    when it is available.
    """
    if not t_max > model.r0:
        raise DomainError("t_max must exceed r0")
    if not tol > 0:
        raise DomainError("tol must be positive")
    if method == "auto":
        method = "closed" if isinstance(model.inner, ConstantK0) else "ode"
    if method == "closed":
        if not isinstance(model.inner, ConstantK0):
            raise ValidationError("closed form requires a ConstantK0 inner profile")
        w = model.omega0

        def inner(t):
            c, s = np.cos(w * t), np.sin(w * t)
            z2 = t * np.sinc(w * t / np.pi)
            return c, -w * s, z2, c

        fs = _build(model, t_max, inner, inner, "closed")
        # the matching coefficients are exact; use them for the tail
        c = matching_coefficients(model)
        return FundamentalSolution(
            model=model, t_max=fs.t_max, zeta1=fs.zeta1, zeta2=fs.zeta2,
            c1=c[0], c2=c[1], c3=c[2], c4=c[3],
            negative_coefficients=fs.negative_coefficients, method="closed",
        )
    if method != "ode":
        raise ValueError(f"unknown method {method!r}")

    r0 = model.r0
    sol_p = _inner_ode(model, r0, tol)
    sol_n = _inner_ode(model, -r0, tol)

    def wrap(sol):
        def inner(t):
            y = sol.sol(np.asarray(t, dtype=float))
            return y[0], y[1], y[2], y[3]
        return inner

    return _build(model, t_max, wrap(sol_p), wrap(sol_n), "ode")


def integrate_fundamental(model: OscillatorModel, times, tol: float = 1e-12):
    """Brute-force ODE integration of both solutions through ``times`` (>= 0).

    Unlike :func:`solve_fundamental` this integrates the tail as well, stopping
    at ``r0`` so the kink in ``k(t)`` is never stepped over. Returns an array of
    shape ``(4, len(times))`` holding ``zeta1, zeta1', zeta2, zeta2'``.
    """
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(np.diff(times) < 0):
        raise DomainError("times must be nonnegative and sorted")
    m, r0 = model.m, model.r0
    kfun = model.k_of_t

    def rhs(t, y):
        kk = kfun(t) / m
        return [y[1], -kk * y[0], y[3], -kk * y[2]]

    out = np.empty((4, times.size))
    y0 = np.array([1.0, 0.0, 0.0, 1.0])
    edges = (0.0, r0, max(float(times.max(initial=0.0)), r0))
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        sol = solve_ivp(rhs, (lo, hi), y0, method="DOP853", rtol=tol, atol=tol,
                        dense_output=True)
        if sol.status != 0:
            raise IntegrationError(sol.message)
        sel = (times >= lo) & (times <= hi)
        if sel.any():
            out[:, sel] = sol.sol(times[sel])
        y0 = sol.y[:, -1]
    return out


def classical_flow(fs: FundamentalSolution, m: float, s: ClassicalState, t: float) -> ClassicalState:
    """``(zeta1 x + zeta2 p/m, m zeta1' x + zeta2' p)`` at time ``t``."""
    z1, d1 = fs.zeta1(t)
    z2, d2 = fs.zeta2(t)
    return ClassicalState(z1 * s.x0 + z2 * s.p0 / m, m * d1 * s.x0 + d2 * s.p0)


class _Estimate(NamedTuple):
    value: float
    error: float


def _richardson(fs, which, T, lam):
    gamma = 1.0 - 2.0 * lam
    zf = fs.zeta1 if which == 0 else fs.zeta2
    e1 = zf(T)[0] / T ** (1 - lam)
    e0 = zf(T / 2)[0] / (T / 2) ** (1 - lam)
    q = 2.0**gamma
    return _Estimate((q * e1 - e0) / (q - 1.0), abs(e1 - e0))


def asymptotic_coefficients(fs: FundamentalSolution, tol: float = 1e-9):
    """Limits ``zeta_j(t)/t**(1-lam)`` as ``t -> inf``.

    The ratio approaches its limit like ``t**(2 lam - 1)``; each estimate is
    Richardson-extrapolated from ``t_max/2`` and ``t_max`` and compared with
    the one from ``t_max/4`` and ``t_max/2``.

    Raises
    ------
    ConvergenceError
        If the two extrapolations differ by more than ``tol``.
    """
    lam, T = fs.lam, fs.t_max
    if T < 1e3 * fs.model.r0:
        raise DomainError("asymptotic coefficients need t_max >= 1e3 * r0")
    out = []
    for which in (0, 1):
        hi = _richardson(fs, which, T, lam)
        lo = _richardson(fs, which, T / 2, lam)
        if abs(hi.value - lo.value) > tol * max(1.0, abs(hi.value)):
            raise ConvergenceError(
                f"zeta{which + 1}/t^(1-lam) not converged: {lo.value!r} vs {hi.value!r}")
        out.append(hi.value)
    return tuple(out)
