"""Short-range potential family.

A potential is ``V(t, x) = b(t) * shape(|x|)`` with a radial shape decaying at
least like ``<x>**-rho``. Construction checks ``rho > 1/(1 - lam)`` for the
oscillator it will be paired with and spot-checks the claimed bounds

    |V(t, x)|      <= C0 * <x>**-rho
    |grad V(t, x)| <= C1 * <x>**-(rho + 1)

on a radial sample lattice.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ValidationError

__all__ = ["PotentialSpec", "potential_eval", "SHAPES"]

SHAPES = ("static_bump", "gaussian_bump")

_R_SAMPLES = np.concatenate([np.linspace(0.0, 10.0, 401), np.geomspace(10.0, 1e6, 400)])
_T_SAMPLES = np.concatenate([-np.geomspace(1e-3, 1e4, 60), [0.0], np.geomspace(1e-3, 1e4, 60)])


def _profile(shape, g, rho, width, r2):
    """Radial profile and ``dV/dr / r`` as functions of ``r**2``."""
    if shape == "static_bump":
        base = (1.0 + r2) ** (-rho / 2.0)
        return g * base, -g * rho * base / (1.0 + r2)
    base = np.exp(-r2 / (2.0 * width**2))
    return g * base, -g * base / width**2


@dataclass(frozen=True)
class PotentialSpec:
    """``V(t, x) = b(t) * shape(|x|)``.

    ``static_bump``: ``g * (1 + |x|^2)**(-rho/2)``.
    ``gaussian_bump``: ``g * exp(-|x|^2 / (2 width^2))``; ``rho`` is then only
    the decay exponent used for bookkeeping and the bound check.
    ``time_factor`` is an optional ``b(t)`` with ``|b| <= 1``.
    ``C0``/``C1`` default to the sharp constants of the shape.
    """

    shape: str
    g: float
    rho: float
    lam: float
    width: float = 1.0
    time_factor: Optional[Callable[[float], float]] = None
    C0: Optional[float] = None
    C1: Optional[float] = None

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValidationError(f"unknown potential shape {self.shape!r}")
        if not (math.isfinite(self.g) and math.isfinite(self.rho)):
            raise ValidationError("g and rho must be finite")
        if not 0 < self.lam < 0.5:
            raise ValidationError(f"lam must lie in (0, 1/2), got {self.lam!r}")
        if not self.rho > 1.0 / (1.0 - self.lam):
            raise ValidationError(
                f"rho={self.rho!r} is not short range for lam={self.lam!r}; "
                f"need rho > {1.0 / (1.0 - self.lam):.6g}")
        if not self.width > 0:
            raise ValidationError("width must be positive")
        r2 = _R_SAMPLES**2
        val, dval = _profile(self.shape, self.g, self.rho, self.width, r2)
        weight = np.sqrt(1.0 + r2)
        sharp0 = float(np.max(np.abs(val) * weight**self.rho))
        sharp1 = float(np.max(np.abs(dval) * _R_SAMPLES * weight ** (self.rho + 1)))
        if self.C0 is None:
            object.__setattr__(self, "C0", sharp0)
        if self.C1 is None:
            object.__setattr__(self, "C1", sharp1)
        if sharp0 > self.C0 * (1 + 1e-12) or sharp1 > self.C1 * (1 + 1e-12):
            raise ValidationError("claimed bounds C0/C1 are violated on the sample lattice")
        if self.time_factor is not None:
            b = np.array([self.time_factor(float(t)) for t in _T_SAMPLES])
            if not np.all(np.abs(b) <= 1.0 + 1e-12):
                raise ValidationError("time factor must satisfy |b(t)| <= 1")

    @classmethod
    def static_bump(cls, g, rho, lam, **kw):
        return cls("static_bump", g=g, rho=rho, lam=lam, **kw)

    @classmethod
    def gaussian_bump(cls, g, width, lam, rho=4.0, **kw):
        return cls("gaussian_bump", g=g, rho=rho, lam=lam, width=width, **kw)

    @property
    def time_dependent(self) -> bool:
        return self.time_factor is not None

    def factor(self, t: float) -> float:
        return 1.0 if self.time_factor is None else float(self.time_factor(t))

    def radial(self, r2):
        """``shape`` as a function of ``|x|^2`` (no time factor)."""
        return _profile(self.shape, self.g, self.rho, self.width, np.asarray(r2, dtype=float))[0]

    def __call__(self, t, coords, scaled=False):
        return potential_eval(self, t, coords, scaled)


def potential_eval(spec: Optional[PotentialSpec], t: float, coords, scaled: bool = False):
    """``V(t, x)`` or, with ``scaled``, ``V(t, |t|**lam x)`` on coordinates.

    ``coords`` is a tuple of broadcastable coordinate arrays (e.g. ``grid.x``)
    or a single array for one dimension. ``spec=None`` is the zero potential.
    """
    if isinstance(coords, np.ndarray) or np.isscalar(coords):
        coords = (np.asarray(coords, dtype=float),)
    r2 = sum(np.asarray(c, dtype=float) ** 2 for c in coords)
    if spec is None:
        return np.zeros_like(r2)
    if scaled:
        r2 = r2 * abs(t) ** (2.0 * spec.lam)
    return spec.factor(t) * spec.radial(r2)
