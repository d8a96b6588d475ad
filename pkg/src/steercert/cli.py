"""Command-line entry point: ``steercert <command> [options]``.

Exit codes: 0 success, 1 usage or input error, 2 certification failure (scan-theta).
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import math
import os
import re
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .errors import SteerCertError
from .lhs import (
    ALGEBRAIC_MAX,
    MAX_LAMBDA,
    UNKNOWN_MEASUREMENT_BOUND,
    falsify,
    model_fgsi_value,
    per_term_model,
    saturating_model,
    steering_bound_known,
    steering_bound_unknown,
)
from .montecarlo import CSV_COLUMNS, ExperimentConfig, estimate_s, scan_theta, simulate_counts
from .optics import (
    CONVENTIONS,
    DEFAULT_CONVENTION,
    HWP_SIGMA_X,
    SANDWICH_SIGMA_Y,
    bob_targets,
    load_table,
    realized_observable,
    solve_angles,
    verify_table_row,
)
from .quantum import bloch_observable, gghz_state, pauli
from .steering import DEFAULT_PATTERN, fgsi_value, optimal_scenario

SEED_ENV = "STEERCERT_SEED"
S_TOLERANCE = 1e-9


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# --- parsing helpers ------------------------------------------------------------


def parse_angle(text: str) -> float:
    """Radians from ``0.25pi``, ``pi``, ``pi/4`` or a plain number."""
    t = str(text).strip().lower().replace(" ", "")
    m = re.fullmatch(r"([-+]?(?:\d+\.?\d*|\.\d+)(?:e[-+]?\d+)?)?\*?pi(?:/([-+]?\d+\.?\d*))?", t)
    if m:
        coef = float(m.group(1)) if m.group(1) not in (None, "", "+") else (-1.0 if m.group(1) == "-" else 1.0)
        div = float(m.group(2)) if m.group(2) else 1.0
        return coef * math.pi / div
    try:
        return float(t)
    except ValueError:
        raise UsageError(f"cannot parse angle {text!r}") from None


def parse_grid(text: str) -> list[float]:
    """``start:stop:count`` (inclusive), a comma list, or a single angle."""
    t = str(text).strip()
    if not t:
        raise UsageError("empty theta grid")
    if ":" in t:
        parts = t.split(":")
        if len(parts) != 3:
            raise UsageError(f"grid {text!r} must look like start:stop:count")
        try:
            count = int(parts[2])
        except ValueError:
            raise UsageError(f"grid count {parts[2]!r} is not an integer") from None
        if count < 1:
            raise UsageError("grid count must be >= 1")
        start, stop = parse_angle(parts[0]), parse_angle(parts[1])
        return [float(x) for x in np.linspace(start, stop, count)]
    return [parse_angle(p) for p in t.split(",") if p.strip()]


def parse_axis_pair(text: str):
    names = [p.strip().lower() for p in str(text).split(",")]
    if len(names) != 2:
        raise UsageError("--charlie takes two comma-separated Pauli axes, e.g. x,y")
    out = []
    for name in names:
        sign = -1.0 if name.startswith("-") else 1.0
        axis = name.lstrip("+-")
        if axis not in ("x", "y", "z"):
            raise UsageError(f"unknown axis {name!r}")
        out.append(bloch_observable(sign * pauli(axis).bloch))
    return tuple(out)


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={raw!r} is not an integer") from None


def resolve_config(args: argparse.Namespace, defaults: dict[str, Any]) -> dict[str, Any]:
    """Merge defaults < --config file < explicit flags."""
    cfg = dict(defaults)
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(loaded) - set(defaults)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


# --- output helpers -------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def _meta(command: str, config: dict) -> dict:
    return {
        "tool": "steercert",
        "version": __version__,
        "command": command,
        "config": config,
        "generated_at": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }


def render_json(command: str, config: dict, payload: dict) -> str:
    return json.dumps(_jsonable({"meta": _meta(command, config), **payload}), indent=2, sort_keys=True) + "\n"


def render_csv(command: str, config: dict, rows: Sequence[dict], columns: Sequence[str]) -> str:
    meta = _meta(command, config)
    buf = io.StringIO()
    buf.write(f"# generated_at: {meta['generated_at']}\n")
    buf.write("# config: " + json.dumps(_jsonable({k: v for k, v in meta.items() if k != "generated_at"}), sort_keys=True) + "\n")
    writer = csv.DictWriter(buf, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if v is None else v) for k, v in _jsonable(row).items()})
    return buf.getvalue()


def emit(text: str, output: str | None) -> None:
    if output:
        path = Path(output)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _check_format(fmt: str) -> str:
    if fmt not in ("csv", "json"):
        raise UsageError(f"--format must be csv or json, not {fmt!r}")
    return fmt


def _experiment(theta: float, cfg: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig(
            theta,
            int(cfg["events"]),
            int(cfg["seed"]),
            float(cfg["efficiency"]),
            float(cfg["dark"]),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# --- commands -----------------------------------------------------------------


def cmd_scan_theta(args) -> int:
    cfg = resolve_config(
        args, {"grid": "0.05pi:0.45pi:9", "events": 0, "seed": default_seed(), "dark": 0.0, "efficiency": 1.0,
               "format": "csv", "output": None}
    )
    fmt = _check_format(cfg["format"])
    grid = parse_grid(cfg["grid"])
    bad = [t for t in grid if not 0 < t < math.pi / 2]
    if bad:
        raise UsageError(f"theta values outside (0, pi/2): {bad}")
    template = _experiment(0.1, cfg) if int(cfg["events"]) > 0 else None
    if int(cfg["events"]) < 0:
        raise UsageError("--events must be >= 0")
    rows = [r.as_dict() for r in scan_theta(grid, template)]
    certified = all(r["exact_s"] is not None and abs(r["exact_s"] - ALGEBRAIC_MAX) <= S_TOLERANCE for r in rows)
    for r in rows:
        r["certified"] = r["exact_s"] is not None and abs(r["exact_s"] - ALGEBRAIC_MAX) <= S_TOLERANCE
    if fmt == "csv":
        cols = ["theta", "theta_over_pi", "exact_s", "s_hat", "s_stderr", "bound_known", "bound_unknown", "certified", "note"]
        emit(render_csv("scan-theta", cfg, rows, cols), cfg["output"])
    else:
        emit(render_json("scan-theta", cfg, {"rows": rows, "certified": certified}), cfg["output"])
    return 0 if certified else 2


def _bounds_report(cfg: dict) -> dict:
    charlie = parse_axis_pair(cfg["charlie"])
    samples = int(cfg["samples"])
    if samples < 0:
        raise UsageError("--samples must be >= 0")
    lam_max = int(cfg["lambda_max"])
    if not 1 <= lam_max <= MAX_LAMBDA:
        raise UsageError(f"--lambda-max must lie in [1, {MAX_LAMBDA}]")
    known = steering_bound_known(*charlie)
    sat = saturating_model(*charlie)
    report: dict[str, Any] = {
        "bounds": {
            "known_measurements": known,
            "unknown_measurements": steering_bound_unknown(),
            "algebraic_max": ALGEBRAIC_MAX,
        },
        "charlie_bloch": [list(c.bloch) for c in charlie],
        "saturating_model": {
            "hidden_values": sat.size,
            "charlie_state_bloch": list(np.real([np.trace(sat.charlie[0] @ p.matrix) for p in (pauli("x"), pauli("y"), pauli("z"))])),
            "s": model_fgsi_value(sat, charlie),
        },
    }
    ptm = per_term_model(*charlie)
    if ptm is not None:
        report["per_term_model"] = {
            "hidden_values": ptm.size,
            "alice_responses": ptm.alice.tolist(),
            "bob_responses": ptm.bob.tolist(),
            "s": model_fgsi_value(ptm, charlie),
        }
    if samples > 0:
        summary = falsify(samples, int(cfg["seed"]), charlie, lambda_counts=tuple(range(1, lam_max + 1)))
        report["falsification"] = summary.as_dict()
        report["falsification"]["below_known_bound"] = summary.exceed_known == 0
    return report


def cmd_bounds(args, command: str = "bounds") -> int:
    cfg = resolve_config(
        args, {"samples": 10000, "seed": default_seed(), "charlie": "x,y", "lambda_max": MAX_LAMBDA,
               "format": "json", "output": None}
    )
    fmt = _check_format(cfg["format"])
    report = _bounds_report(cfg)
    if fmt == "json":
        emit(render_json(command, cfg, report), cfg["output"])
    else:
        rows = [{"quantity": k, "value": v} for k, v in report["bounds"].items()]
        rows.append({"quantity": "saturating_model_s", "value": report["saturating_model"]["s"]})
        if "per_term_model" in report:
            rows.append({"quantity": "per_term_model_s", "value": report["per_term_model"]["s"]})
        for k, v in report.get("falsification", {}).items():
            rows.append({"quantity": f"falsification_{k}", "value": v})
        emit(render_csv(command, cfg, rows, ["quantity", "value"]), cfg["output"])
    return 0


def cmd_falsify(args) -> int:
    return cmd_bounds(args, command="falsify")


def _convention(name: str):
    for c in CONVENTIONS:
        if c.name == name:
            return c
    raise UsageError(f"unknown convention {name!r}; choose from {[c.name for c in CONVENTIONS]}")


def cmd_solve_angles(args) -> int:
    cfg = resolve_config(args, {"theta": None, "convention": DEFAULT_CONVENTION.name, "format": "json", "output": None})
    if cfg["theta"] is None:
        raise UsageError("--theta is required")
    theta = parse_angle(cfg["theta"])
    if not 0 < theta < math.pi / 2:
        raise UsageError(f"theta={theta} outside (0, pi/2)")
    conv = _convention(cfg["convention"])
    result = {}
    for name, target in zip(("B0", "B1"), bob_targets(theta)):
        seq = solve_angles(target, conv)
        realized = realized_observable(seq, conv)
        result[name] = {
            "angles_deg": [round(a, 1) for a in seq.degrees],
            "angles_deg_exact": list(seq.degrees),
            "target_bloch": list(target.bloch),
            "realized_bloch": list(realized.bloch),
            "deviation": realized.distance(target),
        }
    fixed = {}
    for party, seq, target in (
        ("A0/C0", HWP_SIGMA_X, pauli("x")),
        ("A1/C1", SANDWICH_SIGMA_Y, pauli("y")),
    ):
        realized = realized_observable(seq, conv)
        fixed[party] = {
            "plates": [p.kind.value for p in seq.plates],
            "angles_deg": [round(a, 1) for a in seq.degrees],
            "target_bloch": list(target.bloch),
            "realized_bloch": list(realized.bloch),
            "deviation": realized.distance(target),
        }
    payload = {"theta": theta, "theta_over_pi": theta / math.pi, "convention": conv.name, "bob": result, "fixed": fixed}
    if _check_format(cfg["format"]) == "json":
        emit(render_json("solve-angles", cfg, payload), cfg["output"])
    else:
        rows = []
        for name, rec in list(result.items()) + list(fixed.items()):
            rows.append({"observable": name, "angles_deg": " ".join(f"{a:.1f}" for a in rec["angles_deg"]),
                         "deviation": rec["deviation"]})
        emit(render_csv("solve-angles", cfg, rows, ["observable", "angles_deg", "deviation"]), cfg["output"])
    return 0


def cmd_verify_table(args) -> int:
    cfg = resolve_config(args, {"table": None, "tolerance": 0.02, "format": "csv", "output": None})
    try:
        rows = load_table(cfg["table"])
    except (OSError, KeyError, ValueError) as exc:
        raise UsageError(f"cannot read table: {exc}") from None
    reports = [verify_table_row(r, float(cfg["tolerance"])).as_dict() for r in rows]
    summary = {
        "rows": len(reports),
        "pass": sum(r["status"] == "pass" for r in reports),
        "outcome_swapped": sum(r["status"] == "outcome-swapped" for r in reports),
        "flag": sum(r["status"] == "flag" for r in reports),
    }
    if _check_format(cfg["format"]) == "json":
        emit(render_json("verify-table", cfg, {"rows": reports, "summary": summary}), cfg["output"])
    else:
        flat = []
        for r in reports:
            flat.append({**{k: v for k, v in r.items() if not isinstance(v, (dict, list))},
                         "b0_angles_deg": " ".join(map(str, r["b0_angles_deg"])),
                         "b1_angles_deg": " ".join(map(str, r["b1_angles_deg"])),
                         **{f"{name}_{key}": val for name, d in r["per_convention"].items() for key, val in d.items()}})
        emit(render_csv("verify-table", cfg, flat, list(flat[0]) if flat else []), cfg["output"])
    return 0


def cmd_simulate(args) -> int:
    cfg = resolve_config(
        args, {"theta": "0.25pi", "events": 100000, "seed": default_seed(), "dark": 0.0, "efficiency": 1.0,
               "format": "json", "output": None}
    )
    theta = parse_angle(cfg["theta"])
    if not 0 < theta < math.pi / 2:
        raise UsageError(f"theta={theta} outside (0, pi/2)")
    exp = _experiment(theta, cfg)
    state, scenario = gghz_state(theta), optimal_scenario(theta)
    counts = simulate_counts(state, scenario, exp)
    est = estimate_s(counts, DEFAULT_PATTERN)
    exact = fgsi_value(state, scenario).s
    known = steering_bound_known(scenario.c0, scenario.c1)
    summary = {
        "s_hat": est.s_hat,
        "s_stderr": est.s_stderr,
        "exact_s": exact,
        "bound_known": known,
        "bound_unknown": UNKNOWN_MEASUREMENT_BOUND,
        "algebraic_max": ALGEBRAIC_MAX,
        "sigmas_above_known": (est.s_hat - known) / est.s_stderr if est.s_stderr > 0 else None,
        "sigmas_above_unknown": (est.s_hat - UNKNOWN_MEASUREMENT_BOUND) / est.s_stderr if est.s_stderr > 0 else None,
    }
    if _check_format(cfg["format"]) == "json":
        payload = {"counts": counts.records(), "estimate": est.as_dict(), "summary": summary}
        emit(render_json("simulate", cfg, payload), cfg["output"])
    else:
        numerators = {(t.term.setting, t.term.outcome): t for t in est.terms}
        rows = []
        for rec in counts.records():
            key = ((rec["setting_i"], rec["setting_j"], rec["setting_k"]), (rec["a"], rec["b"], rec["c"]))
            t = numerators.get(key)
            rows.append({**rec, "p_hat": t.p_hat if t else None, "stderr": t.stderr if t else None,
                         "s_hat": est.s_hat, "s_stderr": est.s_stderr})
        emit(render_csv("simulate", cfg, rows, CSV_COLUMNS), cfg["output"])
    print(
        f"S = {est.s_hat:.6f} +/- {est.s_stderr:.6f}  (exact {exact:.6f}; bounds {known:.5f} known, "
        f"{UNKNOWN_MEASUREMENT_BOUND:g} unknown; max {ALGEBRAIC_MAX:g})",
        file=sys.stderr,
    )
    return 0


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="steercert", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, fmt=True):
        p.add_argument("--config", help="JSON file with option values (flags override)")
        p.add_argument("--output", "-o", default=None, help="write the artifact here instead of stdout")
        if fmt:
            p.add_argument("--format", choices=("csv", "json"), default=None)

    def experiment(p):
        p.add_argument("--events", type=int, default=None, help="events per setting triple")
        p.add_argument("--seed", type=int, default=None, help=f"default from ${SEED_ENV} or 0")
        p.add_argument("--dark", type=float, default=None, help="dark-count substitution probability")
        p.add_argument("--efficiency", type=float, default=None, help="per-detector efficiency")

    p = sub.add_parser("scan-theta", help="exact and simulated S over a theta grid")
    p.add_argument("--grid", default=None, help="start:stop:count, comma list, or one angle (e.g. 0.25pi)")
    experiment(p)
    common(p)
    p.set_defaults(func=cmd_scan_theta)

    for name, func, samples_help in (
        ("bounds", cmd_bounds, "random hybrid models to sample (0 disables)"),
        ("falsify", cmd_falsify, "random hybrid models to sample"),
    ):
        p = sub.add_parser(name, help="classical bounds and the hybrid-model sampler")
        p.add_argument("--samples", type=int, default=None, help=samples_help)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--charlie", default=None, help="Charlie's two measurement axes, e.g. x,y")
        p.add_argument("--lambda-max", dest="lambda_max", type=int, default=None,
                       help="sample hidden-variable counts 1..N")
        common(p)
        p.set_defaults(func=func)

    p = sub.add_parser("solve-angles", help="waveplate settings for Bob's measurements")
    p.add_argument("--theta", default=None)
    p.add_argument("--convention", default=None, choices=[c.name for c in CONVENTIONS])
    common(p)
    p.set_defaults(func=cmd_solve_angles)

    p = sub.add_parser("verify-table", help="check a printed angle table against the target observables")
    p.add_argument("table", nargs="?", default=None, help="table file (default: bundled table)")
    p.add_argument("--tolerance", type=float, default=None)
    common(p)
    p.set_defaults(func=cmd_verify_table)

    p = sub.add_parser("simulate", help="Monte Carlo coincidence counts and the estimated S")
    p.add_argument("--theta", default=None)
    experiment(p)
    common(p)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, SteerCertError) as exc:
        print(f"steercert {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
