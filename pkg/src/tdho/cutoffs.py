"""Smooth cutoff functions.

Every transition is the same C-infinity step ``S(u)``: the normalized integral
of the bump ``exp(-1/(u(1-u)))`` on ``[0, 1]``, exactly 0 for ``u <= 0`` and
exactly 1 for ``u >= 1``. ``S`` is evaluated from a cumulative table built
with Gauss-Legendre quadrature and cubic Hermite interpolation that uses the
exact derivative, so it is accurate to roughly 1e-13.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .errors import ValidationError

__all__ = ["CutoffSpec", "cutoff_eval", "smooth_step", "rho_lambda", "KINDS"]

KINDS = ("F_le", "F_ge", "F_window", "Phi1", "Phi2")


def _bump(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = (u > 0) & (u < 1)
    ui = u[inside]
    out[inside] = np.exp(-1.0 / (ui * (1.0 - ui)))
    return out


@lru_cache(maxsize=1)
def _step_table(cells=2048, order=10):
    edges = np.linspace(0.0, 1.0, cells + 1)
    nodes, weights = np.polynomial.legendre.leggauss(order)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    pts = mid[:, None] + half[:, None] * nodes[None, :]
    cell_int = (_bump(pts) * weights[None, :]).sum(axis=1) * half
    cum = np.concatenate([[0.0], np.cumsum(cell_int)])
    total = cum[-1]
    return CubicHermiteSpline(edges, cum / total, _bump(edges) / total), total


def smooth_step(u):
    """``S(u)``: 0 for ``u <= 0``, 1 for ``u >= 1``, smooth and increasing between."""
    spline, _ = _step_table()
    u = np.asarray(u, dtype=float)
    out = np.clip(spline(np.clip(u, 0.0, 1.0)), 0.0, 1.0)
    out = np.where(u <= 0, 0.0, np.where(u >= 1, 1.0, out))
    return out.item() if out.ndim == 0 else out


def smooth_step_derivative(u):
    _, total = _step_table()
    out = _bump(u) / total
    return out.item() if out.ndim == 0 else out


def rho_lambda(lam: float) -> float:
    """Spatial scaling exponent ``lam*(1 - 2 lam)`` used by the second range set."""
    return lam * (1.0 - 2.0 * lam)


@dataclass(frozen=True)
class CutoffSpec:
    """A smooth cutoff.

    ``F_le``: 1 for ``s <= theta - eps``, 0 for ``s >= theta``.
    ``F_ge``: 0 for ``s <= theta``, 1 for ``s >= theta + eps``.
    ``F_window``: ``F_ge(theta) * F_le(theta2)``.
    ``Phi1``: 1 on ``(2 kappa1, R1/2)``, 0 outside ``(kappa1, R1)``.
    ``Phi2``: 0 on ``[0, kappa2]``, 1 beyond ``2 kappa2``, nondecreasing.
    """

    kind: str
    theta: float = 0.0
    theta2: float = 0.0
    eps: float = 0.0
    kappa1: float = 0.0
    R1: float = 0.0
    kappa2: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown cutoff kind {self.kind!r}")
        vals = (self.theta, self.theta2, self.eps, self.kappa1, self.R1, self.kappa2)
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError("cutoff parameters must be finite")
        if self.kind in ("F_le", "F_ge", "F_window") and not self.eps > 0:
            raise ValidationError("eps must be positive")
        if self.kind == "F_window" and not self.theta + self.eps <= self.theta2 - self.eps:
            raise ValidationError("window needs theta + eps <= theta2 - eps")
        if self.kind == "Phi1" and not (0 < 4 * self.kappa1 < self.R1):
            raise ValidationError("Phi1 needs 0 < 4 kappa1 < R1 so the flat region is nonempty")
        if self.kind == "Phi2" and not self.kappa2 > 0:
            raise ValidationError("kappa2 must be positive")

    @classmethod
    def le(cls, theta, eps):
        return cls("F_le", theta=theta, eps=eps)

    @classmethod
    def ge(cls, theta, eps):
        return cls("F_ge", theta=theta, eps=eps)

    @classmethod
    def window(cls, lo, hi, eps):
        return cls("F_window", theta=lo, theta2=hi, eps=eps)

    @classmethod
    def phi1(cls, kappa1, R1):
        return cls("Phi1", kappa1=kappa1, R1=R1)

    @classmethod
    def phi2(cls, kappa2):
        return cls("Phi2", kappa2=kappa2)

    def __call__(self, s):
        return cutoff_eval(self, s)


def cutoff_eval(spec: CutoffSpec, s):
    """Evaluate a cutoff at scalar or array ``s``; output lies in ``[0, 1]``."""
    s = np.asarray(s, dtype=float)
    k = spec.kind
    if k == "F_le":
        out = 1.0 - smooth_step((s - (spec.theta - spec.eps)) / spec.eps)
    elif k == "F_ge":
        out = smooth_step((s - spec.theta) / spec.eps)
    elif k == "F_window":
        out = (smooth_step((s - spec.theta) / spec.eps)
               * (1.0 - smooth_step((s - (spec.theta2 - spec.eps)) / spec.eps)))
    elif k == "Phi1":
        k1, half = spec.kappa1, spec.R1 / 2
        out = smooth_step((s - k1) / k1) * (1.0 - smooth_step((s - half) / half))
    else:
        out = smooth_step((s - spec.kappa2) / spec.kappa2)
    out = np.asarray(out, dtype=float)
    return out.item() if out.ndim == 0 else out
