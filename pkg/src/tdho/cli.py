"""Batch driver: ``tdho <command> [--config FILE] [--out DIR] [--jobs N] [--snapshot]``.

Every command writes ``<out>/<command>.csv`` with one row per metric. Exit
status is 0 when every row with a tolerance passes, 2 when any fails and 1
on configuration or runtime errors. ``TDHO_LOG`` sets the log level.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import config as C
from .errors import ConvergenceError, TDHOError
from .estimates import commutator_decay_probe, estimate_series, free_min_velocity_decay, sample_times
from .grid import Grid, from_function, momentum_bump, save_snapshot
from .magnetic import angular_momentum, cyclotron_period_error, evolve_magnetic, omega_phase, reduction_residual
from .oscillator import (asymptotic_coefficients, integrate_fundamental, matching_coefficients,
                         solve_fundamental)
from .propagator import StepPolicy, factorization_residual
from .scattering import cook_tail, wave_operator_forward, wave_operator_inverse

log = logging.getLogger("tdho")

COLUMNS = ("run_id", "command", "params", "metric", "value", "expected", "tolerance", "status")


@dataclass(frozen=True)
class ReportRow:
    """One metric. ``status`` is ``pass``/``fail`` when a tolerance is set, else ``info``.

    With ``expected`` the check is ``|value - expected| <= tolerance``,
    otherwise ``value <= tolerance``.
    """

    metric: str
    value: float
    tolerance: Optional[float] = None
    expected: Optional[float] = None
    params: str = ""

    @property
    def status(self) -> str:
        if self.tolerance is None:
            return "info"
        v = float(self.value)
        if math.isnan(v):
            return "fail"
        if self.expected is None:
            return "pass" if v <= self.tolerance else "fail"
        return "pass" if abs(v - self.expected) <= self.tolerance else "fail"


def _fmt(v) -> str:
    if v is None:
        return ""
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def _t(t) -> str:
    return f"t={_fmt(t)}"


# ---------------------------------------------------------------- commands

def cmd_fundamental(cfg, out_dir, snapshot):
    model = C.build_model(cfg)
    tol = cfg["tolerances"]
    T = cfg["schedule"]["T_max"]
    # the ODE path, so the closed-form rows below compare two independent routes
    fs = solve_fundamental(model, T, method="ode")
    c = matching_coefficients(model)
    w = model.omega0
    lam = model.lam
    rows = []
    times = np.asarray(cfg["schedule"].get("times", [0.0, model.r0, T]), dtype=float)
    for t in times:
        z1, d1 = fs.zeta1(t)
        z2, d2 = fs.zeta2(t)
        rows.append(ReportRow("zeta1", z1, params=_t(t)))
        rows.append(ReportRow("zeta2", z2, params=_t(t)))
        rows.append(ReportRow("wronskian", fs.wronskian(t), tol.get("wronskian"), 1.0, _t(t)))

    # closed forms on [0, T]: oscillator inside, power-law pair outside
    dense = np.concatenate([np.linspace(0.0, model.r0, 201), np.geomspace(model.r0, T, 400)[1:]])
    inside = dense <= model.r0
    sinc = np.where(w > 0, np.sin(w * dense) / (w if w > 0 else 1.0), dense)
    z1_exact = np.where(inside, np.cos(w * dense), c[0] * dense ** (1 - lam) + c[1] * dense**lam)
    z2_exact = np.where(inside, sinc, c[2] * dense ** (1 - lam) + c[3] * dense**lam)
    brute = integrate_fundamental(model, dense)
    err = max(float(np.max(np.abs(brute[0] - z1_exact))), float(np.max(np.abs(brute[2] - z2_exact))))
    rows.append(ReportRow("closed_form_max_error", err, tol.get("closed_form"), params=f"T={_fmt(T)}"))
    wr = float(np.max(np.abs(fs.wronskian(np.linspace(-T, T, 4001)) - 1.0)))
    rows.append(ReportRow("wronskian_max_error", wr, tol.get("wronskian"), params=f"T={_fmt(T)}"))
    for i, ci in enumerate(fs.coefficients, start=1):
        name = f"c{i}"
        expected = c[i - 1] if name in tol else None
        rows.append(ReportRow(name, ci, tol.get(name), expected))
    if T >= 1e3 * model.r0:
        try:
            for i, v in enumerate(asymptotic_coefficients(fs), start=1):
                rows.append(ReportRow(f"asymptotic_c{i}", v))
        except ConvergenceError as exc:
            log.warning("asymptotic coefficients: %s", exc)
            rows.append(ReportRow("asymptotic_converged", 0.0))
    return rows


def cmd_factorization(cfg, out_dir, snapshot):
    model = C.build_model(cfg)
    spec = C.build_potential(cfg, model.lam)
    grid = C.build_grid(cfg)
    psi = C.build_state(cfg, grid, model.r0)
    pol = C.build_policy(cfg)
    tol = cfg["tolerances"]
    limit = tol.get("residual") if spec is not None else tol.get("residual_free")
    rows = []
    for t in cfg["schedule"].get("times", [2 * model.r0, 4 * model.r0, 8 * model.r0]):
        r = factorization_residual(model, spec, psi, float(t), pol)
        rows.append(ReportRow("residual", r, limit, params=_t(t)))
    return rows


def _scatter_setup(cfg):
    model = C.build_model(cfg)
    spec = C.build_potential(cfg, model.lam)
    grid = C.build_grid(cfg)
    psi = C.build_state(cfg, grid, model.r0)
    return model, spec, psi, C.build_policy(cfg)


# absolute slack for gap checks, so a zero Cook tail still admits roundoff
_GAP_ROUNDOFF = 1e-12


def _forward_rows(model, spec, psi, rep, tol):
    rows = []
    for i, gap in enumerate(rep.cauchy_gaps):
        a, b = rep.horizons[i], rep.horizons[i + 1]
        tail, _ = cook_tail(model, spec, psi, a, b)
        rows.append(ReportRow("cauchy_gap", gap, tail + _GAP_ROUNDOFF, params=f"T={_fmt(b)}"))
        rows.append(ReportRow("cook_tail", tail, params=f"T={_fmt(b)}"))
    g = rep.cauchy_gaps
    rises = sum(1 for x, y in zip(g[1:-1], g[2:]) if y > x)
    rows.append(ReportRow("gap_increases_after_first_doubling", rises, 0.0))
    rows.append(ReportRow("final_gap", rep.final_gap, tol.get("final_gap"), params=f"T={_fmt(rep.horizons[-1])}"))
    rows.append(ReportRow("isometry_defect", abs(rep.result.norm() - psi.norm()), tol.get("isometry")))
    return rows


def _forward(cfg, model, spec, psi, pol):
    s = cfg["schedule"]
    try:
        return wave_operator_forward(model, spec, psi, cfg["tolerances"].get("final_gap", 1e-4), pol,
                                     s["k_max"], s["k_min"])
    except ConvergenceError as exc:
        log.warning("%s", exc)
        return exc.report


def cmd_waveop(cfg, out_dir, snapshot):
    model, spec, psi, pol = _scatter_setup(cfg)
    rep = _forward(cfg, model, spec, psi, pol)
    if snapshot:
        save_snapshot(rep.result, out_dir / "waveop.tdho")
    return _forward_rows(model, spec, psi, rep, cfg["tolerances"])


def cmd_complete(cfg, out_dir, snapshot):
    model, spec, psi, pol = _scatter_setup(cfg)
    tol = cfg["tolerances"]
    s = cfg["schedule"]
    fwd = _forward(cfg, model, spec, psi, pol)
    rows = _forward_rows(model, spec, psi, fwd, tol)
    try:
        inv = wave_operator_inverse(model, spec, fwd.result, tol.get("final_gap", 1e-4), pol, s["k_max"],
                                    s["k_min"], None, C.build_cutoffs(cfg), tol.get("membership", 1e-3))
    except ConvergenceError as exc:
        log.warning("%s", exc)
        inv = exc.report
    d = inv.defects
    for t, a, b in zip(d.times, d.w1_defect, d.w2_defect):
        rows.append(ReportRow("range_defect_1", a, params=_t(t)))
        rows.append(ReportRow("range_defect_2", b, params=_t(t)))
    rows.append(ReportRow("final_range_defect_1", d.w1_defect[-1], tol.get("membership")))
    rows.append(ReportRow("final_range_defect_2", d.w2_defect[-1], tol.get("membership")))
    rows.append(ReportRow("inverse_final_gap", inv.final_gap, tol.get("final_gap")))
    rows.append(ReportRow("roundtrip_error", inv.result.distance(psi), tol.get("roundtrip")))
    if snapshot:
        save_snapshot(fwd.result, out_dir / "forward.tdho")
        save_snapshot(inv.result, out_dir / "roundtrip.tdho")
    return rows


def cmd_estimates(cfg, out_dir, snapshot):
    model = C.build_model(cfg)
    spec = C.build_potential(cfg, model.lam)
    ecfg = C.build_estimate_config(cfg, model)
    e = cfg["estimates"]
    tol = cfg["tolerances"]
    parts = e["parts"]
    rows = []
    traj = [p for p in ("large", "middle", "minimal") if p in parts]
    if traj:
        grid = C.build_grid(cfg)
        psi = C.build_state(cfg, grid, model.r0)
        series = estimate_series(model, spec, psi, ecfg, C.build_policy(cfg), which=tuple(traj))
        T = e["stability_T"]
        for key in ("large", "middle"):
            if key not in series:
                continue
            ser = series[key]
            for t, f, p in ser.rows():
                rows.append(ReportRow(f"{key}_integrand", f, params=_t(t)))
                rows.append(ReportRow(f"{key}_partial", p, params=_t(t)))
            rises = int(np.sum(np.diff(ser.partial) < 0))
            rows.append(ReportRow(f"{key}_partial_decreases", rises, 0.0))
            rows.append(ReportRow(f"{key}_doubling_change", ser.doubling_change(T), tol.get("doubling_change"),
                                  params=f"T={_fmt(T)}"))
        if "minimal" in series:
            prof = series["minimal"]
            prof.tol = tol.get("minimal", prof.tol)
            for t, v in zip(prof.times, prof.values):
                rows.append(ReportRow("minimal_profile", v, params=_t(t)))
            rows.append(ReportRow("minimal_not_vacated", 0.0 if prof.decaying else 1.0, 0.0))
    dg = Grid(1, e["decay_grid"]["N"], e["decay_grid"]["L"])
    s = 1.0 - 2.0 * model.lam
    if "free_decay" in parts:
        eps0 = e["free_eps0"]
        main = free_min_velocity_decay(model, momentum_bump(dg, e["bump_momentum"], e["bump_radius"]), eps0)
        ctrl = free_min_velocity_decay(model, momentum_bump(dg, 0.0, e["bump_radius"]), eps0)
        rows.append(ReportRow("free_decay_slope", main.slope, -s))
        rows.append(ReportRow("control_abs_slope", abs(ctrl.slope), tol.get("control_slope")))
    if "commutator" in parts:
        w, p0 = e["probe_width"], e["probe_momentum"]
        probe = from_function(dg, lambda x: np.exp(1j * p0 * x) / (1.0 + x**2 / w**2))
        h = C.build_probe_window(cfg)
        times = sample_times(8.0 * model.r0, 512.0 * model.r0, 2)
        for rho in e["probe_rho"]:
            fit = commutator_decay_probe(model, spec, h, rho, probe, times, ecfg, kind="cutoff")
            rows.append(ReportRow("commutator_slope", fit.slope, -rho + tol.get("probe_slack", 0.1),
                                  params=f"rho={_fmt(rho)}"))
    return rows


def cmd_magnetic(cfg, out_dir, snapshot):
    mm = C.build_magnetic(cfg)
    b = cfg["magnetic"]
    tol = cfg["tolerances"]
    lam = mm.oscillator.lam if mm.Bbar != 0 else C.build_model(cfg).lam
    spec = C.build_potential(cfg, lam)
    rows = []
    for t in cfg["schedule"].get("times", [0.0, mm.r0]):
        rows.append(ReportRow("omega", omega_phase(mm, float(t)), params=_t(t)))

    cyc = b["cyclotron"]
    if mm.B0 != 0:
        err = cyclotron_period_error(mm, cyc["radius"], Grid(2, cyc["N"], cyc["L"]), cyc["periods"],
                                     cyc["dt"], cyc["samples"])
        rows.append(ReportRow("cyclotron_period_rel_error", err, tol.get("period")))

    grid = C.build_grid(cfg)
    psi = C.build_state(cfg, grid, 0.0)
    pol = StepPolicy().fixed(b["dt"])
    times = b["residual_times"]
    for t in times:
        rows.append(ReportRow("reduction_residual_free", reduction_residual(mm, None, psi, float(t), pol),
                              tol.get("residual"), params=_t(t)))
        if spec is not None:
            rows.append(ReportRow("reduction_residual", reduction_residual(mm, spec, psi, float(t), pol),
                                  tol.get("residual"), params=_t(t)))
    if spec is not None and times:
        out = evolve_magnetic(mm, spec, psi, 0.0, float(max(times)), pol)
        drift = abs(angular_momentum(out) - angular_momentum(psi))
        rows.append(ReportRow("angular_momentum_drift", drift, tol.get("angular_momentum"),
                              params=_t(max(times))))
        if snapshot:
            save_snapshot(out, out_dir / "magnetic.tdho")
    return rows


COMMAND_FUNCS = {
    "fundamental": cmd_fundamental,
    "factorization": cmd_factorization,
    "waveop": cmd_waveop,
    "complete": cmd_complete,
    "estimates": cmd_estimates,
    "magnetic": cmd_magnetic,
}


# ---------------------------------------------------------------- driver

def render_csv(rid: str, command: str, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow([rid, command, r.params, r.metric, _fmt(r.value), _fmt(r.expected), _fmt(r.tolerance),
                    r.status])
    return buf.getvalue()


def _header() -> str:
    return ",".join(COLUMNS) + "\n"


def execute(command: str, cfg: dict, out_dir: Path, snapshot: bool) -> tuple:
    """Run one configuration; returns ``(csv_body, any_fail)``."""
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = COMMAND_FUNCS[command](cfg, out_dir, snapshot or cfg["output"]["snapshot"])
    body = render_csv(C.run_id(cfg), command, rows)
    (out_dir / f"{command}.csv").write_text(_header() + body)
    return body, any(r.status == "fail" for r in rows)


def _execute_star(args):
    return execute(*args)


def _setup_logging():
    level = os.environ.get("TDHO_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tdho", description="Numerical checks for time-decaying oscillators.")
    p.add_argument("command", choices=C.COMMANDS)
    p.add_argument("--config", type=Path, help="JSON file merged over the command defaults")
    p.add_argument("--out", type=Path, help="output directory (default: output.dir from the config)")
    p.add_argument("--jobs", type=int, default=1, help="parallel runs for a sweep")
    p.add_argument("--snapshot", action="store_true", help="also write final states as snapshots")
    p.add_argument("--print-config", action="store_true", help="print the merged config and exit")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging()
    try:
        text = args.config.read_text() if args.config else None
        cfg = C.load_config(args.command, text)
        if args.print_config:
            print(json.dumps(cfg, indent=2, sort_keys=True))
            return 0
        if args.jobs < 1:
            raise TDHOError("--jobs must be >= 1")
        out = args.out or Path(cfg["output"]["dir"])
        sweep = cfg.get("sweep") or []
        if not sweep:
            _, failed = execute(args.command, cfg, out, args.snapshot)
        else:
            base = {k: v for k, v in cfg.items() if k != "sweep"}
            runs = []
            for over in sweep:
                sub = C.merge(base, over)
                runs.append((args.command, sub, out / C.run_id(sub), args.snapshot))
            if args.jobs > 1:
                with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                    results = list(pool.map(_execute_star, runs))
            else:
                results = [execute(*r) for r in runs]
            out.mkdir(parents=True, exist_ok=True)
            (out / f"{args.command}.csv").write_text(_header() + "".join(b for b, _ in results))
            failed = any(f for _, f in results)
    except (TDHOError, OSError) as exc:
        print(f"tdho: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # anything else is still an operational failure
        log.debug("unexpected failure", exc_info=True)
        print(f"tdho: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 2 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
