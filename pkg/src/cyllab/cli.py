"""Experiment runner: ``solve | check | family | flowline`` subcommands.

Every run writes machine-readable outputs into ``--out``: deterministic JSON
reports (byte-identical for identical config and seed), CSV series for
plotting, and a run manifest listing every emitted file with wall-clock
timings.  The process exit status is 0 exactly when every requested check
passed and no error occurred.  ``CYLLAB_THREADS`` caps worker parallelism
for family runs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

import cyllab
from cyllab import kernels
from cyllab.cylinder import Cylinder, random_band_limited_field
from cyllab.degeneration import FamilySchedule, run_family, thread_count
from cyllab.errors import CylError, ConfigError
from cyllab.estimates import (
    DELTA,
    build_bump,
    check_diff_inequality,
    com_residual,
    convolution_window_check,
    default_slack,
    elliptic_constant_probe,
    exp_bound_check,
    gamma_profile,
    pointwise_decay_check,
    two_sided_envelope,
    window_decay_check,
)
from cyllab.fieldio import load_field, save_field
from cyllab.solver import SpectralBoundaryData, solve_nonlinear
from cyllab.vfield import flow_ode, model_from_config, sequence_from_config


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, float) and (np.isnan(obj) or np.isinf(obj)):
        return repr(obj)
    return obj


def write_report(path: Path, payload: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


def write_csv(path: Path, header: list, columns: list) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    table = np.column_stack(columns)
    np.savetxt(path, table, delimiter=",", header=",".join(header),
               comments="", fmt="%.17g")
    return path


def config_hash(cfg: dict) -> str:
    canon = json.dumps(_jsonable(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


class Manifest:
    """Per-run bookkeeping: step timings, emitted files, config hash."""

    def __init__(self, cfg: dict, out_dir: Path):
        self.out_dir = out_dir
        self.data = {
            "artifact_version": cyllab.__version__,
            "kernel_backend": kernels.BACKEND,
            "config": _jsonable(cfg),
            "config_hash": config_hash(cfg),
            "steps": [],
            "files": [],
        }

    def step(self, name: str):
        manifest = self

        class _Step:
            def __enter__(self):
                self.t0 = time.perf_counter()
                return self

            def __exit__(self, exc_type, exc, tb):
                manifest.data["steps"].append({
                    "name": name,
                    "status": "error" if exc_type else "ok",
                    "wall_seconds": time.perf_counter() - self.t0,
                })
                return False

        return _Step()

    def add_file(self, path: Path):
        self.data["files"].append(path.name)

    def extra(self, key: str, value):
        self.data[key] = _jsonable(value)

    def write(self) -> Path:
        path = self.out_dir / "manifest.json"
        path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")
        return path


def _load_json_arg(value: str):
    """Accept a path to a JSON file or an inline JSON literal."""
    text = value.strip()
    if text.startswith("{") or text.startswith("["):
        return json.loads(text)
    path = Path(value)
    if not path.exists():
        raise ConfigError(f"missing input file: {value}")
    return json.loads(path.read_text())


def _build_cylinder(r: float, s_per_unit: int, t_modes: int, dim: int) -> Cylinder:
    S = int(round(s_per_unit * (2.0 * r + 2.0))) + 1
    return Cylinder(half_length=r, s_samples=S, t_modes=t_modes, ambient_dim=dim)


def _validate(**requirements):
    """Each value is (ok, actual); raises ConfigError listing offending keys."""
    bad = {key: actual for key, (ok, actual) in requirements.items() if not ok}
    if bad:
        listing = ", ".join(f"{k}={v!r}" for k, v in sorted(bad.items()))
        raise ConfigError(f"invalid configuration values: {listing}")


# -- subcommand implementations -------------------------------------------------

def cmd_solve(args) -> int:
    _validate(
        r=(args.r > 0, args.r),
        tol=(args.tol > 0, args.tol),
        modes=(args.modes >= 2 and args.modes % 2 == 0, args.modes),
        s_per_unit=(args.s_per_unit >= 4, args.s_per_unit),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = {
        "command": "solve", "r": args.r, "eps": args.eps, "modes": args.modes,
        "s_per_unit": args.s_per_unit, "tol": args.tol,
        "bdata": _load_json_arg(args.bdata), "vfield": _load_json_arg(args.vfield),
        "csv": bool(args.csv),
    }
    manifest = Manifest(cfg, out)
    status = 0
    try:
        bdata = SpectralBoundaryData.from_json_list(cfg["bdata"])
        model = model_from_config(cfg["vfield"])
        cyl = _build_cylinder(args.r, args.s_per_unit, args.modes,
                              bdata.ambient_dim())
        with manifest.step("solve"):
            u, report = solve_nonlinear(cyl, bdata, model, args.eps, tol=args.tol)
        if report.ball_violation > 1e-12:
            raise CylError(
                f"ball violation {report.ball_violation:.3g}: solution leaves B(1)"
            )
        with manifest.step("write"):
            header = save_field(u, out / "field", fmt="csv" if args.csv else "npy")
            manifest.add_file(header)
            manifest.add_file(header.with_suffix(".csv" if args.csv else ".npy"))
            rep_path = write_report(out / "solve_report.json", report.to_json_dict())
            manifest.add_file(rep_path)
    except CylError as exc:
        print(f"error: {exc}", file=sys.stderr)
        manifest.extra("error", str(exc))
        status = 1
    manifest.write()
    return status


def cmd_check(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = {
        "command": "check", "field": str(args.field), "eps": args.eps,
        "vfield": _load_json_arg(args.vfield) if args.vfield else None,
        "probe": args.probe, "seed": args.seed,
    }
    manifest = Manifest(cfg, out)
    status = 0
    try:
        u = load_field(args.field)
        r = u.cylinder.half_length
        report: dict = {"half_length": r, "s_samples": u.cylinder.s_samples,
                        "t_modes": u.cylinder.t_modes}
        with manifest.step("gamma"):
            p = gamma_profile(u)
            slack = default_slack(p)
            margin, ok = check_diff_inequality(p, slack)
            fit = exp_bound_check(p)
            report["diff_inequality"] = {
                "margin": margin, "slack": slack, "passed": bool(ok),
            }
            report["gamma_exponential"] = {
                "fitted_c": fit.fitted, "boundary_scale": fit.boundary_scale,
                "kappa": fit.kappa, "passed": bool(fit.passed),
            }
        with manifest.step("bump"):
            bump = build_bump()
            report["bump"] = {"l1": bump.l1, "dd_l1": bump.dd_l1,
                              "ramp_width": bump.ramp_width,
                              "passed": bool(bump.l1 <= 2.0 and bump.dd_l1 <= 40.0)}
        if r > 1.0:
            with manifest.step("windows"):
                wfit = window_decay_check(u)
                m0 = pointwise_decay_check(u, 0)
                m1 = pointwise_decay_check(u, 1)
                conv = convolution_window_check(p, bump)
                report["window_decay"] = {
                    "fitted_C": wfit.fitted, "boundary_scale": wfit.boundary_scale,
                    "passed": bool(wfit.passed)}
                report["pointwise_decay"] = {
                    "M0": m0.fitted, "M0_passed": bool(m0.passed),
                    "M1": m1.fitted, "M1_passed": bool(m1.passed),
                    "passed": bool(m0.passed and m1.passed)}
                report["convolution"] = conv
        else:
            report["window_decay"] = {"skipped": "needs half_length > 1"}
        if cfg["vfield"] is not None:
            with manifest.step("center_of_mass"):
                model = model_from_config(cfg["vfield"])
                resid = com_residual(u, model, args.eps)
                interior = p.interior()
                report["center_of_mass"] = {
                    "sup_residual_interior": float(np.max(resid[interior])),
                }
        if args.probe > 0:
            with manifest.step("elliptic_probe"):
                rng = np.random.default_rng(args.seed)
                corpus = [u] + [
                    random_band_limited_field(u.cylinder, rng)
                    for _ in range(args.probe)
                ]
                report["elliptic_probe"] = {
                    "constant_k0": elliptic_constant_probe(corpus, 0, 0.25),
                    "corpus_size": len(corpus),
                }
        passed = all(
            section.get("passed", True) if isinstance(section, dict) else True
            for section in report.values()
        )
        report["passed"] = bool(passed)
        with manifest.step("write"):
            rep_path = write_report(out / "check_report.json", report)
            manifest.add_file(rep_path)
            env = two_sided_envelope(p.s_grid, r, DELTA)
            csv_path = write_csv(
                out / "gamma_series.csv",
                ["s", "gamma", "gamma_dd", "rhs", "envelope"],
                [p.s_grid, p.gamma, p.gamma_dd, p.rhs,
                 report["gamma_exponential"]["fitted_c"] * env],
            )
            manifest.add_file(csv_path)
        status = 0 if passed else 1
    except CylError as exc:
        print(f"error: {exc}", file=sys.stderr)
        manifest.extra("error", str(exc))
        status = 1
    manifest.write()
    return status


def family_passed(summary: dict, ell: float) -> bool:
    checks = [
        summary.get("entries_active", 0) == summary.get("entries_total", -1),
        summary.get("neck_sup_strictly_decreasing", False),
        summary.get("rho_condition_all", False),
        summary.get("gronwall_all", False),
    ]
    if ell > 0:
        checks.append(summary.get("flow_error_strictly_decreasing", False))
    else:
        checks.append(bool(summary.get("endpoint_gap_non_increasing")))
    return all(checks)


def cmd_family(args) -> int:
    _validate(
        ell=(args.ell >= 0, args.ell),
        tol=(args.tol > 0, args.tol),
        modes=(args.modes >= 2 and args.modes % 2 == 0, args.modes),
        s_per_unit=(args.s_per_unit >= 4, args.s_per_unit),
        r_list=(bool(args.r_list.strip()), args.r_list),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    r_list = [float(v) for v in args.r_list.split(",") if v]
    s_per_unit, t_modes = args.s_per_unit, args.modes
    if args.quick:
        r_list = r_list[:2]
        s_per_unit, t_modes = 12, 32
    cfg = {
        "command": "family", "ell": args.ell, "r_list": r_list,
        "s_per_unit": s_per_unit, "modes": t_modes, "tol": args.tol,
        "seed": args.seed, "quick": bool(args.quick),
        "bdata": _load_json_arg(args.bdata), "vfield": _load_json_arg(args.vfield),
    }
    manifest = Manifest(cfg, out)
    status = 0
    try:
        bdata = SpectralBoundaryData.from_json_list(cfg["bdata"])
        sequence = sequence_from_config(cfg["vfield"])
        if args.ell > 0:
            schedule = FamilySchedule.proportional(args.ell, r_list)
        else:
            schedule = FamilySchedule.vanishing(r_list)
        with manifest.step("family"):
            report = run_family(schedule, bdata, sequence,
                                samples_per_unit=s_per_unit, t_modes=t_modes,
                                tol=args.tol, threads=thread_count())
        payload = report.to_json_dict()
        payload["passed"] = family_passed(report.summary, args.ell)
        with manifest.step("write"):
            rep_path = write_report(out / "family_report.json", payload)
            manifest.add_file(rep_path)
            for entry in report.entries:
                if entry.comparison is None or entry.comparison.oracle_sigma is None:
                    continue
                comp = entry.comparison
                vals = comp.trace_values
                oracle = comp.oracle_values
                diff = np.sqrt(np.sum((vals - oracle) ** 2, axis=1))
                headers = (["sigma"]
                           + [f"p_{i}" for i in range(vals.shape[1])]
                           + [f"oracle_{i}" for i in range(oracle.shape[1])]
                           + ["abs_diff"])
                csv_path = write_csv(
                    out / f"entry_{entry.index:02d}_trace.csv", headers,
                    [comp.oracle_sigma] + list(vals.T) + list(oracle.T) + [diff],
                )
                manifest.add_file(csv_path)
        status = 0 if payload["passed"] else 1
    except CylError as exc:
        print(f"error: {exc}", file=sys.stderr)
        manifest.extra("error", str(exc))
        status = 1
    manifest.write()
    return status


def cmd_flowline(args) -> int:
    _validate(
        duration=(args.duration >= 0, args.duration),
        step=(args.step > 0, args.step),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    start = [float(v) for v in args.start.split(",") if v]
    cfg = {
        "command": "flowline", "start": start, "duration": args.duration,
        "step": args.step, "vfield": _load_json_arg(args.vfield),
    }
    manifest = Manifest(cfg, out)
    status = 0
    try:
        model = model_from_config(cfg["vfield"])
        with manifest.step("integrate"):
            seg = flow_ode(model, np.asarray(start), args.duration, args.step)
            seg_half = flow_ode(model, np.asarray(start), args.duration, args.step / 2)
            seg_quarter = flow_ode(model, np.asarray(start), args.duration, args.step / 4)
        e1 = float(np.linalg.norm(seg.end() - seg_quarter.end()))
        e2 = float(np.linalg.norm(seg_half.end() - seg_quarter.end()))
        richardson = {"coarse_error": e1, "half_step_error": e2}
        if e2 > 1e-15:
            richardson["error_ratio"] = e1 / e2
            richardson["estimated_order"] = float(np.log2(e1 / e2))
        with manifest.step("write"):
            csv_path = write_csv(
                out / "flowline.csv",
                ["tau"] + [f"x_{i}" for i in range(len(start))],
                [seg.taus] + list(seg.samples.T),
            )
            manifest.add_file(csv_path)
            rep_path = write_report(out / "flowline_report.json", {
                "escaped": seg.escaped,
                "duration": seg.duration,
                "step": seg.step,
                "richardson": richardson,
            })
            manifest.add_file(rep_path)
    except CylError as exc:
        print(f"error: {exc}", file=sys.stderr)
        manifest.extra("error", str(exc))
        status = 1
    manifest.write()
    return status


# -- argument parsing ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cyllab",
        description="Perturbed Cauchy-Riemann cylinders: solvers, estimate "
                    "checks, and degeneration experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="solve dbar u = eps V(u) on one cylinder")
    ps.add_argument("--r", type=float, required=True)
    ps.add_argument("--eps", type=float, default=0.0)
    ps.add_argument("--modes", type=int, default=16, help="frequency band size T")
    ps.add_argument("--s-per-unit", type=int, default=64)
    ps.add_argument("--bdata", required=True,
                    help="JSON file or literal: list of {side, k, re, im}")
    ps.add_argument("--vfield", required=True, help="JSON model config")
    ps.add_argument("--tol", type=float, default=1e-10)
    ps.add_argument("--csv", action="store_true", help="write CSV coefficients")
    ps.add_argument("--out", default="out")
    ps.set_defaults(func=cmd_solve)

    pc = sub.add_parser("check", help="run decay-estimate checks on a field file")
    pc.add_argument("--field", required=True, help="field header (.json)")
    pc.add_argument("--vfield", default=None)
    pc.add_argument("--eps", type=float, default=0.0)
    pc.add_argument("--probe", type=int, default=0,
                    help="elliptic probe corpus size (0 = skip)")
    pc.add_argument("--seed", type=int, default=0)
    pc.add_argument("--out", default="out")
    pc.set_defaults(func=cmd_check)

    pf = sub.add_parser("family", help="run a degeneration family")
    pf.add_argument("--ell", type=float, required=True)
    pf.add_argument("--r-list", default="10,20,40,80")
    pf.add_argument("--bdata", required=True)
    pf.add_argument("--vfield", required=True,
                    help="sequence config: {limit, perturbation, amplitude, power}")
    pf.add_argument("--s-per-unit", type=int, default=24)
    pf.add_argument("--modes", type=int, default=8)
    pf.add_argument("--tol", type=float, default=1e-11)
    pf.add_argument("--seed", type=int, default=0)
    pf.add_argument("--quick", action="store_true",
                    help="CI profile: 2 entries, coarse grid, T = 32")
    pf.add_argument("--out", default="out")
    pf.set_defaults(func=cmd_family)

    pl = sub.add_parser("flowline", help="integrate the RK4 flow oracle")
    pl.add_argument("--vfield", required=True)
    pl.add_argument("--start", required=True, help="comma-separated coordinates")
    pl.add_argument("--duration", type=float, required=True)
    pl.add_argument("--step", type=float, required=True)
    pl.add_argument("--out", default="out")
    pl.set_defaults(func=cmd_flowline)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
