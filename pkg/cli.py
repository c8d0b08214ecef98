"""
Command-line entry point.

Usage:
  python cli.py classify r3_nonfoliated
  python cli.py classify scenario.json --grid 5 --format csv --out points.csv
  python cli.py stationary r4_weak_i0 --hamiltonian u --from=0,0,0,0 --a0=0,1,1,0 --steps 512 --out path.csv
  python cli.py functional symplectic2d --path path.csv --variation --seed 7
  python cli.py verify symplectic2d --item 1
  python cli.py verify --item 2ce
  python cli.py examples
  python cli.py examples --export r4_weak_i1 --out r4.json

SOURCE is a scenario file or the name of a catalog entry. Vectors are
comma-separated numbers or hex floats; pass negative values as --from=-1,0.

Exit codes: 0 success, 1 theorem check failed, 2 file or parse error,
3 evaluation error (singular coefficient, trajectory leaving the chart).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence

SCRIPT_DIR = Path(__file__).resolve().parent
if str(SCRIPT_DIR) not in sys.path:
    sys.path.insert(0, str(SCRIPT_DIR))

import numpy as np
import pandas as pd

from catalog import CATALOG, get_entry, self_check
from chat_notifier import format_run_summary, notify
from classify import classify_points, grid_points, rank_profile, twisted_check
from config import DEFAULT_GRID, DEFAULT_SEED, LOG_FORMAT, LOG_LEVEL, RANK_TOL, REPORT_SCHEMA
from errors import (
    DimensionError,
    EvaluationError,
    ExprSyntaxError,
    FlowExitError,
    GridError,
    ScenarioError,
    UnknownIdentifierError,
)
from harness import ScenarioReport, run_item
from paths import cotangent_defect, decode_floats, is_cotangent, load_path, save_path, write_series_csv
from scenario import ScenarioFile, export_entry, extra_points, load_scenario, parse_scenario, save_scenario
from variational import (
    StationarySolveConfig,
    compare_differentials,
    lagrangian,
    sample_variation,
    stationary_residual,
    stationary_solve,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INPUT_ERROR = 2
EXIT_EVALUATION_ERROR = 3

ITEMS = ("1", "1ce", "2", "2ce", "3", "sigma")


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def resolve_source(source: str) -> ScenarioFile:
    """A scenario file path, or a catalog entry exported and re-parsed."""
    path = Path(source).expanduser()
    if path.exists():
        return load_scenario(path)
    if source in CATALOG:
        return parse_scenario(export_entry(get_entry(source)))
    raise ScenarioError(f"no scenario file or catalog entry named {source!r}", "$")


def parse_vector(text: str, dimension: int, flag: str) -> np.ndarray:
    tokens = [token.strip() for token in text.split(",")]
    try:
        values = np.array([float.fromhex(t) if "0x" in t.lower() else float(t) for t in tokens])
    except ValueError as e:
        raise ScenarioError(f"{flag} is not a comma-separated vector: {text!r}", flag) from e
    if values.shape != (dimension,):
        raise ScenarioError(f"{flag} needs {dimension} components, got {values.shape[0]}", flag)
    return values


def _block_vector(scenario: ScenarioFile, block: str, key: str, flag_value: Optional[str]) -> np.ndarray:
    n = scenario.chart.dimension
    if flag_value is not None:
        return parse_vector(flag_value, n, f"--{key}")
    spec = scenario.block(block)
    if key not in spec:
        raise ScenarioError(f"missing {key!r}: give --{key} or a {block}.{key} entry", f"$.{block}.{key}")
    values = decode_floats(spec[key])
    if values.shape != (n,):
        raise ScenarioError(f"expected {n} components", f"$.{block}.{key}")
    return values


def _emit(args, document: Dict, text: str, frame: Optional[pd.DataFrame] = None) -> None:
    """Write the report in the requested format to --out or stdout."""
    if args.format == "csv":
        if frame is None:
            raise ScenarioError("this command has no CSV rendering", "--format")
        payload = frame.to_csv(index=False, float_format="%.17g")
    elif args.format == "text":
        payload = text + "\n"
    else:
        payload = json.dumps(document, indent=2, sort_keys=True) + "\n"
    out = getattr(args, "out", None)
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(payload, encoding="utf-8")
        logger.info(f"Report saved to {path}")
    else:
        sys.stdout.write(payload)


def _notify(args, command: str, scenario: str, passed: bool, item: Optional[str] = None,
            residuals: Optional[Dict[str, float]] = None) -> None:
    if not getattr(args, "notify", False):
        return
    notify(format_run_summary(command, scenario, passed, item=item, residuals=residuals,
                              report_path=getattr(args, "out", None)))


def _steps(args, scenario: Optional[ScenarioFile] = None, block: str = "") -> int:
    if getattr(args, "steps", None):
        return int(args.steps)
    if scenario is not None and "steps" in scenario.block(block):
        return int(scenario.block(block)["steps"])
    return DEFAULT_GRID


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_classify(args) -> int:
    scenario = resolve_source(args.source)
    spec = scenario.block("classify")
    seed = args.seed if args.seed is not None else int(spec.get("seed", DEFAULT_SEED))
    tol = args.tol if args.tol is not None else RANK_TOL
    box = scenario.draw_box
    if args.grid:
        sampled, _ = grid_points(box, args.grid)
    else:
        rng = np.random.default_rng(seed)
        sampled = scenario.chart.sample(rng, int(spec.get("samples", 50)), box)
    extra = extra_points(scenario)
    points = np.vstack([sampled, extra]) if len(extra) else sampled

    result = classify_points(scenario.pi, points, tol, H=scenario.hamiltonian, field_name=scenario.name)
    document = {
        "schema": REPORT_SCHEMA,
        "kind": "classification",
        "scenario": scenario.name,
        "seed": seed,
        "tol": tol,
        "classification": result.to_json(),
    }
    if scenario.phi is not None:
        document["twisted"] = asdict(twisted_check(scenario.pi, scenario.phi, sampled))
    if args.grid:
        document["rank_profile"] = rank_profile(scenario.pi, box, args.grid, tol).to_json()

    summary = result.summary()
    text = "\n".join([
        "=" * 80,
        f"classify {scenario.name}: {summary['evaluated']}/{summary['points']} point(s) evaluated",
        "=" * 80,
        f"  poisson: {summary['poisson']} (max residual {summary['max_poisson_residual']:.3e})",
        f"  weakly foliated: {summary['weakly_foliated']} "
        f"({summary['weakly_foliated_points']} point(s) pass)",
        f"  ranks: {summary['ranks']}",
    ])
    names = scenario.chart.names
    frame = pd.DataFrame([
        {
            **{name: r.point[i] for i, name in enumerate(names)},
            "rank": r.rank,
            "poisson_residual": r.poisson_residual,
            "weakly_foliated": r.weakly_foliated,
            "witness": ";".join("^".join(pair) for pair in (r.witness or [])),
            "jacobiator_in_image": r.jacobiator_in_image,
            "lie_image_inclusion": r.lie_image_inclusion,
            "error": r.error or "",
        }
        for r in result.records
    ])
    _emit(args, document, text, frame)
    _notify(args, "classify", scenario.name, summary["errors"] == 0,
            residuals={"max_poisson_residual": summary["max_poisson_residual"]})
    if summary["errors"]:
        logger.error(f"{summary['errors']} point(s) hit a singular coefficient")
        return EXIT_EVALUATION_ERROR
    return EXIT_OK


def _with_hamiltonian(args, scenario: ScenarioFile) -> ScenarioFile:
    """The scenario with --hamiltonian, when given, replacing its Hamiltonian."""
    if getattr(args, "hamiltonian", None) is None:
        return scenario
    try:
        scenario.chart.expr(args.hamiltonian)
    except (ExprSyntaxError, UnknownIdentifierError) as e:
        raise ScenarioError(str(e), "--hamiltonian") from e
    return replace(scenario, hamiltonian=args.hamiltonian)


def _solve_from_args(args, scenario: ScenarioFile, block: str):
    m = _block_vector(scenario, block, "from", args.start)
    a0 = _block_vector(scenario, block, "a0", args.a0)
    cfg = StationarySolveConfig(m, a0, steps=_steps(args, scenario, block), connection=scenario.connection)
    return stationary_solve(scenario.pi, scenario.hamiltonian, scenario.connection, cfg)


def cmd_stationary(args) -> int:
    scenario = _with_hamiltonian(args, resolve_source(args.source))
    alpha = _solve_from_args(args, scenario, "stationary")
    residual = stationary_residual(scenario.pi, scenario.hamiltonian, scenario.connection, alpha)
    defect = cotangent_defect(alpha, scenario.pi, order=4).vector
    if args.out:
        save_path(alpha, args.out)
    if args.series:
        write_series_csv(args.series, alpha.times, {
            "stationary_residual": residual.series,
            "cotangent_defect": np.max(np.abs(defect), axis=1),
        })
    document = {
        "schema": REPORT_SCHEMA,
        "kind": "stationary",
        "hamiltonian": scenario.hamiltonian,
        "scenario": scenario.name,
        "steps": alpha.steps,
        "start": alpha.base[0].tolist(),
        "end": alpha.base[-1].tolist(),
        "a0": alpha.covector[0].tolist(),
        "a1": alpha.covector[-1].tolist(),
        "stationary_residual": residual.sup,
        "sup_cotangent_defect": float(np.max(np.abs(defect))),
        "lagrangian": lagrangian(scenario.pi, scenario.hamiltonian, alpha),
        "path": alpha.to_json() if not args.out else str(args.out),
    }
    text = "\n".join([
        f"stationary path on {scenario.name}, {alpha.steps} steps",
        f"  x(1) = {alpha.base[-1].tolist()}",
        f"  a(1) = {alpha.covector[-1].tolist()}",
        f"  stationary residual {residual.sup:.3e}, sup cotangent defect {document['sup_cotangent_defect']:.3e}",
    ])
    report_args = argparse.Namespace(format=args.format, out=None)
    _emit(report_args, document, text, alpha.to_frame())
    return EXIT_OK


def cmd_functional(args) -> int:
    scenario = _with_hamiltonian(args, resolve_source(args.source))
    if args.path:
        alpha = load_path(args.path)
        alpha.check_chart(scenario.chart)
    else:
        alpha = _solve_from_args(args, scenario, "functional")
    value = lagrangian(scenario.pi, scenario.hamiltonian, alpha)
    document = {
        "schema": REPORT_SCHEMA,
        "kind": "functional",
        "hamiltonian": scenario.hamiltonian,
        "scenario": scenario.name,
        "steps": alpha.steps,
        "lagrangian": value,
        "cotangent": is_cotangent(alpha, scenario.pi, order=4).ok,
    }
    lines = [f"L^H on {scenario.name} ({alpha.steps} steps) = {value:.15g}"]
    if args.variation:
        seed = args.seed if args.seed is not None else DEFAULT_SEED
        rng = np.random.default_rng(seed)
        v = sample_variation(rng, alpha.steps, alpha.dimension, args.kind)
        comparison = compare_differentials(scenario.pi, scenario.hamiltonian, scenario.connection, alpha, v)
        document["differential"] = {"seed": seed, **asdict(comparison)}
        lines.append(
            f"  differential ({args.kind}): exact {comparison.exact:.12g}, "
            f"finite difference {comparison.finite_difference:.12g}, relative error {comparison.relative_error:.3e}"
        )
    _emit(args, document, "\n".join(lines), pd.DataFrame([{k: v for k, v in document.items()
                                                          if not isinstance(v, dict)}]))
    return EXIT_OK


def cmd_verify(args) -> int:
    settings = {k: v for k, v in (("seed", args.seed), ("steps", args.steps or args.grid)) if v is not None}
    if args.item in ("1ce", "2ce"):
        if args.item == "1ce":
            if args.tol is not None:
                settings["tol"] = args.tol
            if args.draws is not None:
                settings["draws"] = args.draws
        report: ScenarioReport = run_item(args.item, **settings)
    else:
        if not args.source:
            raise ScenarioError(f"--item {args.item} needs a SOURCE", "$")
        scenario_file = resolve_source(args.source)
        overrides = dict(settings, tol=args.tol, draws=args.draws, covector_mode=args.covector_mode)
        scenario = scenario_file.theorem_scenario(**overrides)
        report = run_item(args.item, scenario)

    frame = pd.DataFrame([
        {"index": d.index, "status": d.status, **d.metrics, "error": d.error or ""} for d in report.draws
    ])
    _emit(args, report.to_json(), report.to_text(), frame)
    _notify(args, "verify", report.scenario, report.passed, item=args.item,
            residuals={k: v for k, v in report.summary.items() if isinstance(v, float)})
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def cmd_examples(args) -> int:
    if args.export:
        if not args.out:
            raise ScenarioError("--export needs --out PATH", "--out")
        save_scenario(export_entry(get_entry(args.export)), args.out)
        return EXIT_OK
    if args.check:
        checks = [self_check(entry, seed=args.seed if args.seed is not None else DEFAULT_SEED)
                  for entry in CATALOG.values()]
        for check in checks:
            status = "ok" if check.passed else "FAILED: " + "; ".join(check.failures)
            sys.stdout.write(f"{check.name:<28} {status}\n")
        return EXIT_OK if all(c.passed for c in checks) else EXIT_CHECK_FAILED
    for entry in CATALOG.values():
        labels = ", ".join(f"{k}={'yes' if v.value else 'no'}" for k, v in entry.labels.items())
        sys.stdout.write(f"{entry.name:<28} {entry.description}\n{'':<28} H = {entry.hamiltonian}; {labels}\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="Random seed (default from config)")
    common.add_argument("--tol", type=float, default=None, help="Tolerance override")
    common.add_argument("--out", default=None, help="Output path")
    common.add_argument("--format", choices=("json", "text", "csv"), default="json", help="Report format")
    common.add_argument("--notify", action="store_true", help="Post a run summary to the chat webhook")

    parser = argparse.ArgumentParser(description="Cotangent paths, bivector fields and theorem checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", parents=[common], help="Pointwise classification of a bivector field")
    p.add_argument("source", help="Scenario file or catalog entry")
    p.add_argument("--grid", type=int, default=None, help="Nodes per axis of a tensor grid over the box")
    p.set_defaults(func=cmd_classify)

    def add_solve_flags(p):
        p.add_argument("--from", dest="start", default=None, help="Initial point m")
        p.add_argument("--a0", default=None, help="Initial covector a_0")
        p.add_argument("--steps", type=int, default=None, help=f"Path grid intervals (default {DEFAULT_GRID})")
        p.add_argument("--hamiltonian", default=None, metavar="EXPR", help="Hamiltonian overriding the scenario's")

    p = sub.add_parser("stationary", parents=[common], help="Solve the stationary-point equations")
    p.add_argument("source", help="Scenario file or catalog entry")
    add_solve_flags(p)
    p.add_argument("--series", default=None, help="CSV file for residual and defect series")
    p.set_defaults(func=cmd_stationary)

    p = sub.add_parser("functional", parents=[common], help="Evaluate L^H and its differential")
    p.add_argument("source", help="Scenario file or catalog entry")
    p.add_argument("--path", default=None, help="Path file (.csv or .json)")
    add_solve_flags(p)
    p.add_argument("--variation", action="store_true", help="Compare exact and finite-difference differentials")
    p.add_argument("--kind", default="free", choices=("free", "fixed-endpoints", "initially-cotangent"))
    p.set_defaults(func=cmd_functional)

    p = sub.add_parser("verify", parents=[common], help="Run a theorem scenario")
    p.add_argument("source", nargs="?", default=None, help="Scenario file or catalog entry")
    p.add_argument("--item", required=True, choices=ITEMS)
    p.add_argument("--grid", type=int, default=None, help="Path grid intervals")
    p.add_argument("--steps", type=int, default=None, help="Path grid intervals")
    p.add_argument("--draws", type=int, default=None, help="Number of random draws")
    p.add_argument("--covector-mode", default=None, choices=("cotangent", "arbitrary", "dH", "kernel"))
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("examples", parents=[common], help="List, check or export catalog entries")
    p.add_argument("--export", default=None, metavar="NAME", help="Export an entry as a scenario file")
    p.add_argument("--check", action="store_true", help="Run every entry's self-check")
    p.set_defaults(func=cmd_examples)
    return parser


INPUT_ERRORS = (ScenarioError, ExprSyntaxError, UnknownIdentifierError, OSError, json.JSONDecodeError,
                KeyError, GridError, DimensionError)
EVALUATION_ERRORS = (EvaluationError, FlowExitError)


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)
    args = build_parser().parse_args(argv)
    handler: Callable = args.func
    try:
        return handler(args)
    except EVALUATION_ERRORS as e:
        logger.error(f"Evaluation error: {e}")
        _notify(args, args.command, getattr(args, "source", None) or "-", False)
        return EXIT_EVALUATION_ERROR
    except INPUT_ERRORS as e:
        logger.error(f"Input error: {e}")
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
