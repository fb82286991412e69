"""JSON run configuration: defaults per subcommand, schema, and object builders.

A user file is deep-merged over the defaults of the chosen subcommand and then
validated against :data:`SCHEMA` (unknown keys are rejected). The builders turn
the validated blocks into library objects, which re-check their own invariants.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
from typing import Optional

import jsonschema

from .cutoffs import CutoffSpec
from .errors import ValidationError
from .estimates import EstimateConfig
from .grid import Grid, WaveFunction, make_gaussian, momentum_bump
from .magnetic import MagneticModel
from .oscillator import ConstantK0, OscillatorModel
from .potential import SHAPES, PotentialSpec
from .propagator import StepPolicy
from .scattering import RangeCutoffs

__all__ = [
    "COMMANDS",
    "SCHEMA",
    "default_config",
    "load_config",
    "merge",
    "run_id",
    "build_model",
    "build_grid",
    "build_potential",
    "build_state",
    "build_policy",
    "build_cutoffs",
    "build_estimate_config",
    "build_magnetic",
]

COMMANDS = ("fundamental", "factorization", "waveop", "complete", "estimates", "magnetic")

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
# keeps |b| and |b'| at most 1
_OMEGA = {"type": "number", "minimum": -1, "maximum": 1}
_VEC = {"type": "array", "items": _NUM, "minItems": 1, "maxItems": 2}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


SCHEMA = _obj({
    "model": _obj({"m": _POS, "k": _POS, "r0": _POS, "k0": {"type": "number", "minimum": 0}},
                  ["m", "k", "r0", "k0"]),
    "grid": _obj({"dim": {"enum": [1, 2]}, "N": {"type": "integer", "minimum": 8}, "L": _POS},
                 ["dim", "N", "L"]),
    "potential": {"oneOf": [{"type": "null"}, _obj({
        "shape": {"enum": list(SHAPES)},
        "g": _NUM,
        "rho": _POS,
        "width": _POS,
        "time_factor": {"oneOf": [{"type": "null"},
                                  _obj({"kind": {"enum": ["cos"]}, "omega": _OMEGA}, ["kind", "omega"])]},
    }, ["shape", "g", "rho"])]},
    "state": _obj({
        "kind": {"enum": ["gaussian", "momentum_bump"]},
        "center": _VEC,
        "momentum": _VEC,
        "width": _POS,
        "radius": _POS,
    }, ["kind"]),
    "cutoffs": _obj({k: _POS for k in ("kappa1", "R1", "kappa2", "eps", "eta0", "eps2", "eps3")}
                    | {"eps5": {"oneOf": [{"type": "null"}, _POS]}}),
    "schedule": _obj({
        "k_min": {"type": "integer", "minimum": 1},
        "k_max": {"type": "integer", "minimum": 1},
        "T_max": _POS,
        "per_octave": {"type": "integer", "minimum": 1},
        "times": {"type": "array", "items": _NUM},
        "adaptive": {"type": "boolean"},
        "dt_max": _POS,
        "error_target": _POS,
        "relative_target": {"type": "number", "minimum": 0},
        "max_halvings": {"type": "integer", "minimum": 0},
    }),
    "tolerances": {"type": "object", "additionalProperties": _NUM},
    "estimates": _obj({
        "parts": {"type": "array", "uniqueItems": True,
                  "items": {"enum": ["large", "middle", "minimal", "free_decay", "commutator"]}},
        "decay_grid": _obj({"N": {"type": "integer", "minimum": 8}, "L": _POS}, ["N", "L"]),
        "free_eps0": _POS,
        "bump_radius": _POS,
        "bump_momentum": _NUM,
        "probe_rho": {"type": "array", "items": _POS, "minItems": 1},
        "probe_width": _POS,
        "probe_momentum": _NUM,
        "probe_window": {"type": "array", "items": _POS, "minItems": 3, "maxItems": 3},
        "stability_T": _POS,
    }),
    "magnetic": _obj({
        "q": _NUM, "B0": _NUM, "Bbar": _NUM, "m": _POS, "r0": _POS,
        "cyclotron": _obj({"radius": _POS, "periods": _POS, "dt": _POS, "N": {"type": "integer", "minimum": 8},
                           "L": _POS, "samples": {"type": "integer", "minimum": 3}}),
        "residual_times": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "dt": _POS,
    }, ["q", "B0", "Bbar", "m", "r0"]),
    "output": _obj({"dir": {"type": "string"}, "snapshot": {"type": "boolean"}}),
    "sweep": {"type": "array", "items": {"type": "object"}},
}, ["model", "grid", "state", "schedule", "tolerances", "output"])


_SCATTER_MODEL = {"m": 0.125, "k": 0.0234375, "r0": 1.0, "k0": 0.0}
_FREE_INSIDE_MODEL = {"m": 1.0, "k": 0.1875, "r0": 1.0, "k0": 0.0}

_BASE = {
    "model": _SCATTER_MODEL,
    "grid": {"dim": 1, "N": 8192, "L": 1024.0},
    "potential": {"shape": "static_bump", "g": 1.0, "rho": 2.0, "width": 1.0, "time_factor": None},
    "state": {"kind": "gaussian", "center": [0.0], "momentum": [2.0], "width": 8.0},
    "cutoffs": {"kappa1": 0.05, "R1": 16.0, "kappa2": 0.05, "eps": 0.01, "eta0": 1.0,
                "eps2": 0.05, "eps3": 0.03, "eps5": None},
    "schedule": {"k_min": 8, "k_max": 8, "T_max": 1024.0, "per_octave": 8, "adaptive": True,
                 "dt_max": 0.25, "error_target": 1e-13, "relative_target": 1e-7, "max_halvings": 16},
    "tolerances": {},
    "output": {"dir": "tdho-out", "snapshot": False},
}

_OVERRIDES = {
    "fundamental": {
        "model": _FREE_INSIDE_MODEL,
        "potential": None,
        "schedule": {"T_max": 1000.0, "times": [0.0, 0.5, 1.0, 2.0, 10.0, 100.0, 1000.0]},
        "tolerances": {"wronskian": 1e-8, "closed_form": 1e-8, "c3": 1e-10, "c4": 1e-10},
    },
    "factorization": {
        "model": _FREE_INSIDE_MODEL,
        "grid": {"N": 2048, "L": 64.0},
        "potential": {"shape": "gaussian_bump", "g": 1.0, "rho": 4.0, "width": 1.0},
        "state": {"center": [0.0], "momentum": [1.0], "width": 1.0},
        "schedule": {"times": [1.0, 2.0, 4.0, 8.0], "adaptive": False, "dt_max": 0.0025},
        "tolerances": {"residual_free": 1e-6, "residual": 1e-5},
    },
    "waveop": {
        "tolerances": {"final_gap": 1e-4, "isometry": 1e-6},
    },
    "complete": {
        "tolerances": {"final_gap": 1e-4, "isometry": 1e-6, "roundtrip": 1e-3, "membership": 1e-3},
    },
    "estimates": {
        "grid": {"N": 32768, "L": 2048.0},
        "state": {"center": [132.0], "momentum": [-2.0], "width": 8.0},
        "schedule": {"dt_max": 0.25, "error_target": 1e-7, "relative_target": 0.0},
        "estimates": {
            "parts": ["large", "middle", "minimal", "free_decay", "commutator"],
            "decay_grid": {"N": 8192, "L": 1024.0},
            "free_eps0": 0.5,
            "bump_radius": 0.25,
            "bump_momentum": 1.0,
            "probe_rho": [0.5, 0.75],
            "probe_width": 4.0,
            "probe_momentum": 2.0,
            "probe_window": [1.0, 2.0, 0.25],
            "stability_T": 512.0,
        },
        "tolerances": {"doubling_change": 0.05, "control_slope": 0.05, "probe_slack": 0.1,
                       "minimal": 1e-3},
    },
    "magnetic": {
        "model": _FREE_INSIDE_MODEL,
        "grid": {"dim": 2, "N": 512, "L": 24.0},
        "potential": {"shape": "static_bump", "g": 1.0, "rho": 2.0, "width": 1.0},
        "state": {"center": [2.0, 1.0], "momentum": [0.5, -1.0], "width": 1.0},
        "schedule": {"times": [0.0, 0.5, 1.0, 2.0, 4.0]},
        "magnetic": {
            "q": 1.0, "B0": 1.0, "Bbar": math.sqrt(3.0) / 2.0, "m": 1.0, "r0": 1.0,
            "cyclotron": {"radius": 4.0, "periods": 1.0, "dt": 0.05, "N": 256, "L": 16.0, "samples": 16},
            "residual_times": [1.0, 2.0],
            "dt": 0.02,
        },
        "tolerances": {"period": 1e-3, "residual": 1e-6, "angular_momentum": 1e-8},
    },
}


def merge(base, over):
    """Deep merge of plain JSON values; ``over`` wins, ``None`` replaces."""
    if isinstance(base, dict) and isinstance(over, dict):
        out = copy.deepcopy(base)
        for k, v in over.items():
            out[k] = merge(base[k], v) if k in base and base[k] is not None else copy.deepcopy(v)
        return out
    return copy.deepcopy(over)


def default_config(command: str) -> dict:
    if command not in COMMANDS:
        raise ValidationError(f"unknown command {command!r}")
    return merge(_BASE, _OVERRIDES[command])


def load_config(command: str, text: Optional[str] = None) -> dict:
    """Defaults for ``command`` overlaid with the JSON ``text`` and validated."""
    cfg = default_config(command)
    if text is not None:
        try:
            user = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ValidationError("config must be a JSON object")
        cfg = merge(cfg, user)
    validate(cfg)
    for over in cfg.get("sweep", []):
        validate(merge({k: v for k, v in cfg.items() if k != "sweep"}, over))
    return cfg


def validate(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ValidationError(f"config error at {where}: {exc.message}") from exc


def run_id(cfg: dict) -> str:
    """Stable short hash of a configuration (output block excluded)."""
    body = {k: v for k, v in cfg.items() if k not in ("output", "sweep")}
    blob = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def build_model(cfg: dict) -> OscillatorModel:
    b = cfg["model"]
    return OscillatorModel(m=b["m"], k=b["k"], r0=b["r0"], inner=ConstantK0(b["k0"]))


def build_grid(cfg: dict) -> Grid:
    b = cfg["grid"]
    return Grid(b["dim"], b["N"], b["L"])


def build_potential(cfg: dict, lam: float) -> Optional[PotentialSpec]:
    b = cfg.get("potential")
    if b is None:
        return None
    tf = b.get("time_factor")
    factor = None
    if tf is not None:
        omega = float(tf["omega"])
        factor = lambda t, w=omega: math.cos(w * t)  # noqa: E731
    return PotentialSpec(b["shape"], g=b["g"], rho=b["rho"], lam=lam, width=b.get("width", 1.0),
                         time_factor=factor)


def _vec(v, dim, name):
    if len(v) == 1:
        return [float(v[0])] * dim if dim == 1 else [float(v[0])] + [0.0] * (dim - 1)
    if len(v) != dim:
        raise ValidationError(f"state {name} needs {dim} entries")
    return [float(x) for x in v]


def build_state(cfg: dict, grid: Grid, time_tag: float = 0.0) -> WaveFunction:
    b = cfg["state"]
    momentum = _vec(b.get("momentum", [0.0]), grid.dim, "momentum")
    if b["kind"] == "gaussian":
        center = _vec(b.get("center", [0.0]), grid.dim, "center")
        return make_gaussian(grid, center, momentum, b.get("width", 1.0), time_tag)
    return momentum_bump(grid, momentum, b.get("radius", 0.25), time_tag)


def build_policy(cfg: dict) -> StepPolicy:
    b = cfg["schedule"]
    pol = StepPolicy(dt_max=b["dt_max"], error_target=b["error_target"],
                     max_halvings=b["max_halvings"], relative_target=b["relative_target"])
    return pol if b["adaptive"] else pol.fixed(b["dt_max"])


def build_cutoffs(cfg: dict) -> RangeCutoffs:
    b = cfg["cutoffs"]
    return RangeCutoffs(kappa1=b["kappa1"], R1=b["R1"], kappa2=b["kappa2"])


def build_estimate_config(cfg: dict, model: OscillatorModel) -> EstimateConfig:
    b = cfg["cutoffs"]
    s = cfg["schedule"]
    return EstimateConfig.for_model(
        model, kappa1=b["kappa1"], R1=b["R1"], kappa2=b["kappa2"], eps=b["eps"], eta0=b["eta0"],
        eps2=b["eps2"], eps3=b["eps3"], eps5=b["eps5"], T_max=s["T_max"], per_octave=s["per_octave"])


def build_probe_window(cfg: dict) -> CutoffSpec:
    lo, hi, eps = cfg["estimates"]["probe_window"]
    return CutoffSpec.window(lo, hi, eps)


def build_magnetic(cfg: dict) -> MagneticModel:
    b = cfg["magnetic"]
    return MagneticModel(q=b["q"], B0=b["B0"], Bbar=b["Bbar"], m=b["m"], r0=b["r0"])
