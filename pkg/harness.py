"""
Theorem-level verification scenarios.

Each run draws its initial data up front from a seeded generator, evaluates
the draws (concurrently when COTANGENT_LAB_THREADS > 1) and assembles a
report ordered by draw index, so a given seed always produces the same
report. Draws whose flow leaves the chart or hits a singular coefficient are
recorded as skipped, never dropped.

Runs:
    item1              stationary solves from cotangent initial data stay cotangent (foliated fields)
    item3              stationary solves are quasi-cotangent (Poisson fields); on a non-Poisson
                       scenario the run searches for a failing draw instead
    item2 witness      on a field that is not weakly foliated, initially cotangent data whose
                       stationary solve is not cotangent
    counterexample I   weakly foliated, not foliated, yet every stationary path is cotangent
    counterexample II  weakly foliated field with an initially cotangent stationary path that
                       is not cotangent
    sigma              L^H(alpha) equals the sigma-model functional of its extension
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from batch_processor import process_items
from catalog import CatalogEntry, Label, get_entry
from classify import kernel_basis, weakly_foliated_at
from config import DEFAULT_GRID, DEFAULT_SEED, DEFECT_TOL, RANK_TOL, REPORT_SCHEMA
from errors import EvaluationError, FlowExitError, GridError, ScenarioError
from geometry import BivectorField, ConnectionSpec, gradient_field, hamiltonian_vf, lie_derivative_pi
from paths import MIN_STEPS, CotangentPath, cotangent_defect, is_cotangent, is_quasi_cotangent, time_grid
from sigma import verify_equality
from variational import (
    StationarySolveConfig,
    differential_exact,
    differential_fd,
    sample_variation,
    stationary_residual,
    stationary_solve,
)

logger = logging.getLogger(__name__)

COVECTOR_MODES = ("cotangent", "arbitrary", "dH", "kernel")

# Derivative order used by every cotangent check in the harness.
CHECK_ORDER = 4

# Counterexample II: the defect c(t) = (0, 0, 0, -t^2) reaches 1 at t = 1.
COUNTEREXAMPLE_II_DEFECT_BOUND = 0.99
COUNTEREXAMPLE_II_INITIAL_TOL = 1e-10
COUNTEREXAMPLE_II_STATIONARY_TOL = 1e-8
COUNTEREXAMPLE_II_FD_TOL = 1e-6

_SKIPPABLE = (FlowExitError, EvaluationError)


# ---------------------------------------------------------------------------
# Scenario
# ---------------------------------------------------------------------------

@dataclass
class TheoremScenario:
    """
    A field with its Hamiltonian, ground-truth labels on the draw box, and the
    sampling and tolerance settings of a run.
    """

    name: str
    pi: BivectorField
    hamiltonian: str
    labels: Dict[str, Label]
    box: Tuple[Tuple[float, float], ...]
    draws: int = 20
    steps: int = DEFAULT_GRID
    seed: int = DEFAULT_SEED
    tol: float = DEFECT_TOL
    covector_mode: str = "arbitrary"
    connection: Optional[ConnectionSpec] = None
    source: str = "inline"

    def __post_init__(self):
        for key, label in self.labels.items():
            if not isinstance(label, Label):
                raise ScenarioError(f"label {key!r} has no provenance note", f"$.labels.{key}")
        if self.draws < 1:
            raise ScenarioError(f"draws must be positive, got {self.draws}", "$.draws")
        if self.steps < MIN_STEPS or self.steps % 2:
            raise GridError(f"scenario grid must be even and at least {MIN_STEPS}, got {self.steps}")
        if self.covector_mode not in COVECTOR_MODES:
            raise ScenarioError(f"unknown covector mode {self.covector_mode!r}", "$.covector_mode")
        if len(self.box) != self.pi.chart.dimension:
            raise ScenarioError(f"box has {len(self.box)} sides for dimension {self.pi.chart.dimension}", "$.box")

    @classmethod
    def from_catalog(cls, name: str, **overrides) -> "TheoremScenario":
        entry: CatalogEntry = get_entry(name)
        settings = dict(
            name=entry.name,
            pi=entry.pi,
            hamiltonian=entry.hamiltonian,
            labels=entry.labels_on_box(),
            box=entry.box,
            source=f"catalog:{entry.name}",
        )
        settings.update(overrides)
        return cls(**settings)

    def label(self, key: str) -> bool:
        if key not in self.labels:
            raise ScenarioError(f"scenario has no {key!r} label", f"$.labels.{key}")
        return self.labels[key].value

    def require(self, key: str, value: bool, run: str) -> None:
        if self.label(key) != value:
            state = "" if value else "not "
            raise ScenarioError(f"{run} needs a scenario labelled {state}{key}", f"$.labels.{key}")


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------

@dataclass
class DrawRecord:
    index: int
    status: str
    point: List[float]
    covector: List[float]
    metrics: Dict[str, float] = field(default_factory=dict)
    error: Optional[str] = None


@dataclass
class ScenarioReport:
    scenario: str
    item: str
    seed: int
    passed: bool
    tol: float
    draws: List[DrawRecord] = field(default_factory=list)
    checks: Dict[str, Dict] = field(default_factory=dict)
    summary: Dict[str, float] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)

    @property
    def skipped(self) -> int:
        return sum(1 for d in self.draws if d.status == "skipped")

    def to_json(self) -> Dict:
        return {
            "schema": REPORT_SCHEMA,
            "kind": "theorem_report",
            "scenario": self.scenario,
            "item": self.item,
            "seed": self.seed,
            "passed": self.passed,
            "tol": self.tol,
            "summary": self.summary,
            "checks": self.checks,
            "notes": self.notes,
            "draws": [asdict(d) for d in self.draws],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = [
            "=" * 80,
            f"{self.item} on {self.scenario}: {'PASS' if self.passed else 'FAIL'}",
            f"seed {self.seed}, tol {self.tol:g}, draws {len(self.draws)} ({self.skipped} skipped)",
            "=" * 80,
        ]
        for name, check in self.checks.items():
            status = "ok" if check.get("passed") else "FAILED"
            details = ", ".join(f"{k}={_fmt(v)}" for k, v in sorted(check.items()) if k != "passed")
            lines.append(f"  [{status}] {name}: {details}")
        for key, value in sorted(self.summary.items()):
            lines.append(f"  {key}: {_fmt(value)}")
        for draw in self.draws:
            metrics = ", ".join(f"{k}={_fmt(v)}" for k, v in sorted(draw.metrics.items()))
            suffix = f" ({draw.error})" if draw.error else ""
            lines.append(f"  draw {draw.index:>3} {draw.status:<8} {metrics}{suffix}")
        lines.extend(f"  note: {note}" for note in self.notes)
        return "\n".join(lines)


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.3e}"
    return str(value)


# ---------------------------------------------------------------------------
# Draws
# ---------------------------------------------------------------------------

def _kernel_combination(pi: BivectorField, point: np.ndarray, rng: np.random.Generator,
                        normalize: bool) -> np.ndarray:
    basis = kernel_basis(pi.at(point), RANK_TOL)
    if basis.shape[1] == 0:
        return np.zeros(pi.chart.dimension)
    k = basis @ rng.normal(size=basis.shape[1])
    if normalize:
        k = k / np.linalg.norm(k)
    return k


def draw_initial_data(scenario: TheoremScenario, rng: np.random.Generator,
                      mode: Optional[str] = None) -> List[Tuple[np.ndarray, np.ndarray]]:
    """
    (m, a_0) pairs with m uniform in the scenario box and a_0 by mode:
      cotangent  d_mH + k, k a random element of ker pi_sharp_m
      kernel     d_mH + k with |k| = 1 (zero when the kernel is trivial)
      arbitrary  uniform in [-1, 1]^n
      dH         d_mH
    """
    mode = mode or scenario.covector_mode
    chart = scenario.pi.chart
    dH = gradient_field(chart, scenario.hamiltonian)
    points = chart.sample(rng, scenario.draws, scenario.box)
    data = []
    for m in points:
        if mode == "arbitrary":
            a0 = rng.uniform(-1.0, 1.0, size=chart.dimension)
        elif mode == "dH":
            a0 = dH.at(m)
        else:
            a0 = dH.at(m) + _kernel_combination(scenario.pi, m, rng, normalize=(mode == "kernel"))
        data.append((m, a0))
    return data


def _solve(scenario: TheoremScenario, m: np.ndarray, a0: np.ndarray) -> CotangentPath:
    cfg = StationarySolveConfig(m, a0, steps=scenario.steps, connection=scenario.connection)
    return stationary_solve(scenario.pi, scenario.hamiltonian, scenario.connection, cfg)


def _run_draws(scenario: TheoremScenario, item: str, data: Sequence[Tuple],
               evaluate: Callable[..., Tuple[bool, Dict[str, float]]]) -> List[DrawRecord]:
    """`data` holds (m, a_0, ...) tuples; `evaluate` receives each tuple unpacked."""
    logger.info("=" * 80)
    logger.info(f"HARNESS - {item} on {scenario.name}: {len(data)} draw(s), seed {scenario.seed}")
    logger.info("=" * 80)
    outcomes = process_items(lambda d: evaluate(*d), list(data), label="draw", recoverable=_SKIPPABLE)
    records = []
    for outcome, entry in zip(outcomes, data):
        point, covector = [float(v) for v in entry[0]], [float(v) for v in entry[1]]
        if outcome["status"] == "success":
            ok, metrics = outcome["result"]
            record = DrawRecord(outcome["index"], "pass" if ok else "fail", point, covector, metrics)
            logger.debug(f"draw {record.index}: {record.status} {metrics}")
        else:
            record = DrawRecord(outcome["index"], "skipped", point, covector, error=outcome["error"])
            logger.warning(f"Skipped draw {record.index}: {outcome['error']}")
        records.append(record)
    return records


def _sup_metric(records: Sequence[DrawRecord], key: str) -> float:
    return max((r.metrics[key] for r in records if key in r.metrics), default=0.0)


def _finish(report: ScenarioReport) -> ScenarioReport:
    evaluated = [d for d in report.draws if d.status != "skipped"]
    report.summary.setdefault("evaluated", len(evaluated))
    report.summary.setdefault("skipped", report.skipped)
    logger.info(f"HARNESS - {report.item} on {report.scenario}: {'PASS' if report.passed else 'FAIL'} "
                f"({len(evaluated)} evaluated, {report.skipped} skipped)")
    return report


# ---------------------------------------------------------------------------
# Theorem items
# ---------------------------------------------------------------------------

def run_item1(scenario: TheoremScenario) -> ScenarioReport:
    """Stationary solves from cotangent initial data are cotangent paths on a foliated field."""
    scenario.require("foliated", True, "item 1")
    rng = np.random.default_rng(scenario.seed)
    data = draw_initial_data(scenario, rng, "cotangent")

    def evaluate(m, a0):
        alpha = _solve(scenario, m, a0)
        check = is_cotangent(alpha, scenario.pi, scenario.tol, order=CHECK_ORDER)
        return check.ok, {"defect": check.residual}

    draws = _run_draws(scenario, "item1", data, evaluate)
    evaluated = [d for d in draws if d.status != "skipped"]
    report = ScenarioReport(
        scenario.name, "item1", scenario.seed,
        passed=bool(evaluated) and all(d.status == "pass" for d in evaluated),
        tol=scenario.tol, draws=draws,
        summary={"sup_defect": _sup_metric(draws, "defect")},
    )
    return _finish(report)


def run_item3_forward(scenario: TheoremScenario) -> ScenarioReport:
    """
    Stationary solves are quasi-cotangent on a Poisson field. On a scenario
    labelled non-Poisson the run passes when some draw fails instead.
    """
    poisson = scenario.label("poisson")
    tol = scenario.tol
    rng = np.random.default_rng(scenario.seed)
    data = draw_initial_data(scenario, rng)
    connection = scenario.connection or ConnectionSpec.flat(scenario.pi.chart)
    require_cotangent = scenario.covector_mode == "dH"

    def evaluate(m, a0):
        alpha = _solve(scenario, m, a0)
        quasi = is_quasi_cotangent(alpha, scenario.pi, scenario.hamiltonian, connection, tol, CHECK_ORDER)
        defect = is_cotangent(alpha, scenario.pi, tol, order=CHECK_ORDER)
        ok = quasi.ok and (defect.ok or not require_cotangent)
        return ok, {"quasi_residual": quasi.residual, "base_residual": quasi.base_residual,
                    "defect": defect.residual}

    draws = _run_draws(scenario, "item3", data, evaluate)
    evaluated = [d for d in draws if d.status != "skipped"]
    failing = [d.index for d in evaluated if d.status == "fail"]
    if poisson:
        passed = bool(evaluated) and not failing
        mode = "forward"
    else:
        passed = bool(failing)
        mode = "witness"
    report = ScenarioReport(
        scenario.name, "item3", scenario.seed, passed, tol, draws,
        checks={"mode": {"passed": passed, "mode": mode, "failing_draws": len(failing)}},
        summary={"sup_quasi_residual": _sup_metric(draws, "quasi_residual"),
                 "sup_defect": _sup_metric(draws, "defect")},
    )
    if not poisson and failing:
        report.notes.append(f"first failing draw: {failing[0]}")
    return _finish(report)


def run_item2_witness(scenario: TheoremScenario) -> ScenarioReport:
    """
    On a field that is not weakly foliated, initially cotangent data
    a_0 = d_mH + k, k in ker pi_sharp_m, whose stationary solve is not
    cotangent. Each draw records |(L_{X_H} pi)_sharp_m(k)|.
    """
    scenario.require("weakly_foliated", False, "item 2 witness")
    rng = np.random.default_rng(scenario.seed)
    data = draw_initial_data(scenario, rng, "kernel")
    pi, H = scenario.pi, scenario.hamiltonian
    lie = lie_derivative_pi(pi, hamiltonian_vf(pi, H))
    dH = gradient_field(pi.chart, H)

    def evaluate(m, a0):
        k = a0 - dH.at(m)
        lie_norm = float(np.linalg.norm(lie.at(m) @ k))
        alpha = _solve(scenario, m, a0)
        defect = cotangent_defect(alpha, pi, CHECK_ORDER).vector
        initial = float(np.max(np.abs(defect[0])))
        sup = float(np.max(np.abs(defect)))
        witness = initial <= scenario.tol and sup > scenario.tol and lie_norm > scenario.tol
        return witness, {"initial_defect": initial, "defect": sup, "lie_norm": lie_norm}

    draws = _run_draws(scenario, "item2", data, evaluate)
    witnesses = [d.index for d in draws if d.status == "pass"]
    report = ScenarioReport(
        scenario.name, "item2", scenario.seed, bool(witnesses), scenario.tol, draws,
        checks={"witness": {"passed": bool(witnesses), "witness_draws": len(witnesses)}},
        summary={"sup_defect": _sup_metric(draws, "defect"), "sup_lie_norm": _sup_metric(draws, "lie_norm")},
    )
    if witnesses:
        report.notes.append(f"witness draw: {witnesses[0]}")
    return _finish(report)


# ---------------------------------------------------------------------------
# Counterexamples
# ---------------------------------------------------------------------------

def run_counterexample_I(draws: int = 10, steps: int = DEFAULT_GRID, seed: int = DEFAULT_SEED,
                         tol: float = DEFECT_TOL) -> ScenarioReport:
    """
    r4_weak_i1: weakly foliated and not foliated, yet stationary paths are
    cotangent. Through the axis pi vanishes, so the base path is constant and
    trivially cotangent; off the axis the field is nondegenerate.
    """
    entry = get_entry("r4_weak_i1")
    off_axis = TheoremScenario.from_catalog(entry.name, draws=draws, steps=steps, seed=seed, tol=tol)
    rng = np.random.default_rng(seed)
    axis_points = np.zeros((draws, 4))
    axis_points[:, 2:] = rng.uniform(-1.0, 1.0, size=(draws, 2))
    axis_data = [(m, rng.uniform(-1.0, 1.0, size=4)) for m in axis_points]
    pi = entry.pi

    def evaluate_axis(m, a0):
        alpha = _solve(off_axis, m, a0)
        drift = float(np.max(np.abs(alpha.base - m)))
        defect = is_cotangent(alpha, pi, tol, order=CHECK_ORDER)
        return drift <= tol and defect.ok, {"drift": drift, "defect": defect.residual}

    axis_draws = _run_draws(off_axis, "counterexample-I axis", axis_data, evaluate_axis)
    off_report = run_item1(off_axis)
    weak_on_axis = [weakly_foliated_at(pi, m)[0] for m in axis_points]

    checks = {
        "labels": {"passed": not entry.labels["foliated"].value and entry.labels["weakly_foliated"].value},
        "weakly_foliated_on_axis": {"passed": all(weak_on_axis), "points": len(weak_on_axis)},
        "axis_paths_constant_and_cotangent": {
            "passed": all(d.status == "pass" for d in axis_draws),
            "sup_drift": _sup_metric(axis_draws, "drift"),
        },
        "off_axis_cotangent": {"passed": off_report.passed, "sup_defect": off_report.summary["sup_defect"]},
    }
    for d in off_report.draws:
        d.index += len(axis_draws)
    report = ScenarioReport(
        entry.name, "counterexample-I", seed,
        passed=all(c["passed"] for c in checks.values()),
        tol=tol, draws=axis_draws + off_report.draws, checks=checks,
    )
    report.notes.append("axis draws come first, off-axis draws follow")
    return _finish(report)


def counterexample_II_path(steps: int = DEFAULT_GRID) -> CotangentPath:
    """a(t) = (0, 1, 1, 0), x(t) = (t, 0, 0, 0) in (x, y, u, v) coordinates."""
    t = time_grid(steps)
    base = np.zeros((steps + 1, 4))
    base[:, 0] = t
    covector = np.tile([0.0, 1.0, 1.0, 0.0], (steps + 1, 1))
    return CotangentPath(base, covector)


def run_counterexample_II(steps: int = DEFAULT_GRID, seed: int = DEFAULT_SEED,
                          variations: int = 50) -> ScenarioReport:
    """
    r4_weak_i0 with H = u: the straight path is initially cotangent and
    stationary among initially cotangent paths from (0,0,0,0) to (1,0,0,0),
    yet it is not cotangent.
    """
    entry = get_entry("r4_weak_i0")
    pi, H = entry.pi, "u"
    alpha = counterexample_II_path(steps)
    rng = np.random.default_rng(seed)

    defect = cotangent_defect(alpha, pi, order=2).vector
    initial = float(np.max(np.abs(defect[0])))
    sup_defect = float(np.max(np.abs(defect)))
    residual = stationary_residual(pi, H, None, alpha)

    draws = []
    worst_ratio = 0.0
    for index in range(variations):
        v = sample_variation(rng, steps, 4, "initially-cotangent")
        fd = differential_fd(pi, H, alpha, v)
        exact = differential_exact(pi, H, None, alpha, v)
        ratio = abs(fd) / v.norm()
        worst_ratio = max(worst_ratio, ratio)
        status = "pass" if ratio <= COUNTEREXAMPLE_II_FD_TOL else "fail"
        draws.append(DrawRecord(index, status, [0.0, 0.0, 0.0, 0.0], [0.0, 1.0, 1.0, 0.0],
                                {"fd": fd, "exact": exact, "norm": v.norm()}))

    checks = {
        "initially_cotangent": {"passed": initial <= COUNTEREXAMPLE_II_INITIAL_TOL, "defect_at_0": initial},
        "stationary_equations": {
            "passed": residual.sup <= COUNTEREXAMPLE_II_STATIONARY_TOL,
            "base_residual": residual.base,
            "covector_residual": residual.covector,
        },
        "stationary_fd": {
            "passed": worst_ratio <= COUNTEREXAMPLE_II_FD_TOL,
            "variations": variations,
            "max_fd_over_norm": worst_ratio,
        },
        "not_cotangent": {
            "passed": sup_defect >= COUNTEREXAMPLE_II_DEFECT_BOUND,
            "sup_defect": sup_defect,
            "bound": COUNTEREXAMPLE_II_DEFECT_BOUND,
        },
    }
    report = ScenarioReport(
        entry.name, "counterexample-II", seed,
        passed=all(c["passed"] for c in checks.values()),
        tol=COUNTEREXAMPLE_II_FD_TOL, draws=draws, checks=checks,
        summary={"terminal_point": float(alpha.base[-1, 0])},
    )
    report.notes.append("H = u; path from (0,0,0,0) to (1,0,0,0); defect c(t) = (0,0,0,-t^2)")
    return _finish(report)


# ---------------------------------------------------------------------------
# Sigma-model equality
# ---------------------------------------------------------------------------

def random_path(rng: np.random.Generator, scenario: TheoremScenario) -> CotangentPath:
    """Smooth path with base m + t d + t^2 e inside the box scale, covector a cubic in t."""
    chart = scenario.pi.chart
    n = chart.dimension
    t = time_grid(scenario.steps)[:, None]
    m = chart.sample(rng, 1, scenario.box)[0]
    lo, hi = np.array(scenario.box, dtype=float).T
    width = 0.25 * (hi - lo)
    base = m + t * rng.uniform(-1, 1, n) * width + t ** 2 * rng.uniform(-1, 1, n) * width
    coeffs = rng.uniform(-1.0, 1.0, size=(4, n))
    covector = sum(c * t ** k for k, c in enumerate(coeffs))
    return CotangentPath(base, covector)


def run_sigma(scenario: TheoremScenario, y_steps: Optional[int] = None) -> ScenarioReport:
    """L^H(alpha) against the sigma-model functional on random smooth paths."""
    y_steps = y_steps or scenario.steps
    rng = np.random.default_rng(scenario.seed)
    paths = [random_path(rng, scenario) for _ in range(scenario.draws)]

    def evaluate(alpha):
        eq = verify_equality(scenario.pi, scenario.hamiltonian, alpha, y_steps)
        return eq.passed(scenario.tol), {
            "lagrangian": eq.lagrangian,
            "ks_lagrangian": eq.ks_lagrangian,
            "gap": eq.absolute_gap,
            "first_integrand": eq.first_integrand_sup,
            "y_variation": eq.y_variation_sup,
        }

    data = [(alpha.base[0], alpha.covector[0], alpha) for alpha in paths]
    draws = _run_draws(scenario, "sigma", data, lambda m, a0, alpha: evaluate(alpha))
    evaluated = [d for d in draws if d.status != "skipped"]
    report = ScenarioReport(
        scenario.name, "sigma", scenario.seed,
        passed=bool(evaluated) and all(d.status == "pass" for d in evaluated),
        tol=scenario.tol, draws=draws,
        summary={"sup_gap": _sup_metric(draws, "gap"),
                 "sup_first_integrand": _sup_metric(draws, "first_integrand"),
                 "sup_y_variation": _sup_metric(draws, "y_variation")},
    )
    return _finish(report)


ITEMS = {
    "1": run_item1,
    "3": run_item3_forward,
    "2": run_item2_witness,
    "sigma": run_sigma,
}


def run_item(item: str, scenario: Optional[TheoremScenario] = None, **settings) -> ScenarioReport:
    """Dispatch by CLI item name; the counterexamples build their own scenario."""
    if item == "1ce":
        return run_counterexample_I(**settings)
    if item == "2ce":
        return run_counterexample_II(**{k: v for k, v in settings.items() if k in ("steps", "seed")})
    if item not in ITEMS:
        raise ValueError(f"unknown item {item!r}; expected one of {sorted(ITEMS) + ['1ce', '2ce']}")
    if scenario is None:
        raise ScenarioError(f"item {item} needs a scenario", "$")
    if settings:
        scenario = replace(scenario, **settings)
    return ITEMS[item](scenario)
