"""
Scenario files: JSON documents describing a chart, a bivector field, a
Hamiltonian and optional connection, twisted 3-form, labels and
command-specific blocks.

    {
      "schema": "cotangent-lab/scenario@1",
      "name": "r3_nonfoliated",
      "chart": {"dim": 3, "coords": ["x", "y", "z"], "bounds": [[-1, 1], ...]},
      "pi": [[null, "x", "1"], [null, null, "-1"], [null, null, null]],
      "hamiltonian": "y",
      "connection": {"christoffels": [[k, i, j, "expr"], ...], "torsion_free": false},
      "phi": [[i, j, k, "expr"], ...],
      "labels": {"poisson": {"value": false, "provenance": "..."}, ...},
      "labels_on_box": {...same keys, valid only inside "box"...},
      "box": [[-1, 1], ...],
      "classify": {"samples": 50, "extra_points": [[...]], "seed": 1},
      "stationary": {"from": [...], "a0": [...], "steps": 512},
      "verify": {"draws": 20, "steps": 512, "seed": 1, "tol": 1e-6, "covector_mode": "cotangent"}
    }

Numbers may be JSON numbers or hex-float strings ("0x1.8p+0"); exported
files always use hex floats so a round trip is exact. Validation errors
carry the JSON path of the offending value.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from catalog import LABEL_KEYS, CatalogEntry, Label
from errors import DimensionError, ExprSyntaxError, ScenarioError, UnknownIdentifierError
from geometry import BivectorField, Chart, ConnectionSpec, ThreeForm
from harness import TheoremScenario
from paths import decode_floats, encode_floats

logger = logging.getLogger(__name__)

SCENARIO_SCHEMA = "cotangent-lab/scenario@1"

COMMAND_BLOCKS = ("classify", "stationary", "functional", "verify")


@dataclass(eq=False)
class ScenarioFile:
    name: str
    chart: Chart
    pi: BivectorField
    hamiltonian: str
    connection: Optional[ConnectionSpec] = None
    phi: Optional[ThreeForm] = None
    labels: Optional[Dict[str, Label]] = None
    labels_on_box: Optional[Dict[str, Label]] = None
    box: Optional[Tuple[Tuple[float, float], ...]] = None
    blocks: Dict[str, Dict[str, Any]] = field(default_factory=dict)

    def block(self, name: str) -> Dict[str, Any]:
        return self.blocks.get(name, {})

    @property
    def draw_box(self) -> Tuple[Tuple[float, float], ...]:
        box = self.box if self.box is not None else self.chart.bounds
        if box is None:
            raise ScenarioError("no draw box: give \"box\" or chart bounds", "$.box")
        return box

    def theorem_scenario(self, **overrides) -> TheoremScenario:
        if self.labels is None:
            raise ScenarioError("theorem runs need ground-truth labels", "$.labels")
        settings: Dict[str, Any] = dict(
            name=self.name,
            pi=self.pi,
            hamiltonian=self.hamiltonian,
            labels=self.labels_on_box if self.labels_on_box is not None else self.labels,
            box=self.draw_box,
            connection=self.connection,
            source="file",
        )
        verify = self.block("verify")
        for key in ("draws", "steps", "seed"):
            if key in verify:
                settings[key] = int(verify[key])
        if "tol" in verify:
            settings["tol"] = float(decode_floats(verify["tol"]))
        if "covector_mode" in verify:
            settings["covector_mode"] = str(verify["covector_mode"])
        settings.update({k: v for k, v in overrides.items() if v is not None})
        return TheoremScenario(**settings)


# ---------------------------------------------------------------------------
# Validation helpers
# ---------------------------------------------------------------------------

def _require(doc: Dict, key: str, path: str, kind=None):
    if not isinstance(doc, dict):
        raise ScenarioError("expected an object", path)
    if key not in doc:
        raise ScenarioError(f"missing key {key!r}", path)
    value = doc[key]
    if kind is not None and not isinstance(value, kind):
        raise ScenarioError(f"expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}", f"{path}.{key}")
    return value


def _number(value, path: str) -> float:
    try:
        result = float(decode_floats(value))
    except (TypeError, ValueError) as e:
        raise ScenarioError(f"not a number: {value!r} ({e})", path) from e
    return result


def _box(value, dim: int, path: str) -> Tuple[Tuple[float, float], ...]:
    if not isinstance(value, list) or len(value) != dim:
        raise ScenarioError(f"expected {dim} [lo, hi] pairs", path)
    box = []
    for i, side in enumerate(value):
        if not isinstance(side, list) or len(side) != 2:
            raise ScenarioError("expected a [lo, hi] pair", f"{path}[{i}]")
        lo, hi = _number(side[0], f"{path}[{i}][0]"), _number(side[1], f"{path}[{i}][1]")
        if not lo < hi:
            raise ScenarioError(f"empty interval [{lo}, {hi}]", f"{path}[{i}]")
        box.append((lo, hi))
    return tuple(box)


def _expression(chart: Chart, value, path: str):
    if not isinstance(value, str):
        raise ScenarioError(f"expected an expression string, got {type(value).__name__}", path)
    try:
        return chart.expr(value)
    except (ExprSyntaxError, UnknownIdentifierError) as e:
        raise ScenarioError(str(e), path) from e


def _chart(doc: Dict) -> Chart:
    spec = _require(doc, "chart", "$", dict)
    coords = _require(spec, "coords", "$.chart", list)
    if not coords or not all(isinstance(c, str) and c.isidentifier() for c in coords):
        raise ScenarioError("coords must be a non-empty list of identifiers", "$.chart.coords")
    if "dim" in spec and spec["dim"] != len(coords):
        raise ScenarioError(f"dim {spec['dim']} does not match {len(coords)} coords", "$.chart.dim")
    bounds = _box(spec["bounds"], len(coords), "$.chart.bounds") if spec.get("bounds") is not None else None
    try:
        return Chart(tuple(coords), bounds)
    except DimensionError as e:
        raise ScenarioError(str(e), "$.chart") from e


def _pi(doc: Dict, chart: Chart) -> BivectorField:
    n = chart.dimension
    matrix = _require(doc, "pi", "$", list)
    if len(matrix) != n:
        raise ScenarioError(f"expected {n} rows, got {len(matrix)}", "$.pi")
    entries = {}
    for i, row in enumerate(matrix):
        if not isinstance(row, list) or len(row) != n:
            raise ScenarioError(f"expected a row of {n} entries", f"$.pi[{i}]")
        for j, value in enumerate(row):
            path = f"$.pi[{i}][{j}]"
            if i < j:
                if value is None:
                    raise ScenarioError("upper-triangle entry is missing", path)
                entries[(i, j)] = _expression(chart, value, path)
            elif value is not None:
                raise ScenarioError("only entries with i < j may be given", path)
    return BivectorField.from_upper(chart, entries)


def _indexed_entries(items, chart: Chart, arity: int, path: str) -> Dict[Tuple[int, ...], Any]:
    if not isinstance(items, list):
        raise ScenarioError("expected a list of [index..., expression] entries", path)
    n = chart.dimension
    entries = {}
    for k, item in enumerate(items):
        item_path = f"{path}[{k}]"
        if not isinstance(item, list) or len(item) != arity + 1:
            raise ScenarioError(f"expected {arity} indices and an expression", item_path)
        idx = item[:arity]
        if not all(isinstance(i, int) and 0 <= i < n for i in idx):
            raise ScenarioError(f"indices must be integers in [0, {n})", item_path)
        entries[tuple(idx)] = _expression(chart, item[arity], f"{item_path}[{arity}]")
    return entries


def _connection(doc: Dict, chart: Chart) -> Optional[ConnectionSpec]:
    spec = doc.get("connection")
    if spec is None:
        return None
    entries = _indexed_entries(_require(spec, "christoffels", "$.connection"), chart, 3, "$.connection.christoffels")
    try:
        return ConnectionSpec.from_entries(chart, entries, bool(spec.get("torsion_free", False)),
                                           str(spec.get("name", "file")))
    except ValueError as e:
        raise ScenarioError(str(e), "$.connection") from e


def _phi(doc: Dict, chart: Chart) -> Optional[ThreeForm]:
    if doc.get("phi") is None:
        return None
    entries = _indexed_entries(doc["phi"], chart, 3, "$.phi")
    try:
        return ThreeForm.from_upper(chart, entries)
    except DimensionError as e:
        raise ScenarioError(str(e), "$.phi") from e


def _labels(doc: Dict, key: str = "labels") -> Optional[Dict[str, Label]]:
    spec = doc.get(key)
    if spec is None:
        return None
    labels = {}
    for name in LABEL_KEYS:
        item = _require(spec, name, f"$.{key}", dict)
        value = _require(item, "value", f"$.{key}.{name}", bool)
        provenance = _require(item, "provenance", f"$.{key}.{name}", str)
        try:
            labels[name] = Label(value, provenance)
        except ValueError as e:
            raise ScenarioError(str(e), f"$.{key}.{name}.provenance") from e
    return labels


# ---------------------------------------------------------------------------
# Load / export
# ---------------------------------------------------------------------------

def parse_scenario(doc: Dict) -> ScenarioFile:
    if not isinstance(doc, dict):
        raise ScenarioError("a scenario must be a JSON object", "$")
    schema = doc.get("schema", SCENARIO_SCHEMA)
    if schema != SCENARIO_SCHEMA:
        raise ScenarioError(f"unsupported schema {schema!r}", "$.schema")
    chart = _chart(doc)
    pi = _pi(doc, chart)
    hamiltonian = _require(doc, "hamiltonian", "$", str)
    _expression(chart, hamiltonian, "$.hamiltonian")
    box = _box(doc["box"], chart.dimension, "$.box") if doc.get("box") is not None else None
    labels_on_box = _labels(doc, "labels_on_box")
    if labels_on_box is not None and box is None:
        raise ScenarioError("box labels need a \"box\"", "$.labels_on_box")
    blocks = {}
    for name in COMMAND_BLOCKS:
        if name in doc:
            if not isinstance(doc[name], dict):
                raise ScenarioError("expected an object", f"$.{name}")
            blocks[name] = doc[name]
    return ScenarioFile(
        name=str(doc.get("name", "scenario")),
        chart=chart,
        pi=pi,
        hamiltonian=hamiltonian,
        connection=_connection(doc, chart),
        phi=_phi(doc, chart),
        labels=_labels(doc),
        labels_on_box=labels_on_box,
        box=box,
        blocks=blocks,
    )


def load_scenario(path: Union[str, Path]) -> ScenarioFile:
    """Read and validate a scenario file; raises ScenarioError, OSError or json.JSONDecodeError."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    scenario = parse_scenario(doc)
    logger.info(f"Loaded scenario '{scenario.name}' from {path} ({scenario.chart.dimension} coordinates)")
    return scenario


def export_entry(entry: CatalogEntry, samples: int = 50) -> Dict:
    """Scenario document for a catalog entry, with hex-float numbers."""
    n = entry.chart.dimension
    matrix: List[List[Optional[str]]] = [["0" if i < j else None for j in range(n)] for i in range(n)]
    for (i, j), value in entry.pi_entries.items():
        matrix[i][j] = value
    doc: Dict[str, Any] = {
        "schema": SCENARIO_SCHEMA,
        "name": entry.name,
        "description": entry.description,
        "chart": {"dim": n, "coords": list(entry.coords)},
        "pi": matrix,
        "hamiltonian": entry.hamiltonian,
        "labels": {k: v.to_json() for k, v in entry.labels.items()},
        "box": [encode_floats(side) for side in entry.box],
        "classify": {"samples": samples},
    }
    if entry.box_labels is not None:
        doc["labels_on_box"] = {k: v.to_json() for k, v in entry.box_labels.items()}
    if entry.axis_points:
        doc["classify"]["extra_points"] = [encode_floats(p) for p in entry.axis_points]
    if entry.phi_entries is not None:
        doc["phi"] = [[*idx, value] for idx, value in entry.phi_entries.items()]
    return doc


def save_scenario(doc: Dict, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2), encoding="utf-8")
    logger.info(f"Scenario saved to {path}")


def extra_points(scenario: ScenarioFile) -> np.ndarray:
    points = scenario.block("classify").get("extra_points", [])
    n = scenario.chart.dimension
    try:
        arr = np.array([decode_floats(p) for p in points], dtype=float).reshape(-1, n)
    except (TypeError, ValueError) as e:
        raise ScenarioError(f"bad extra point list ({e})", "$.classify.extra_points") from e
    return arr

