"""
Built-in example fields with ground-truth labels.

Every entry is defined by expression strings so it can be exported to a
scenario file and re-imported unchanged. Labels hold on the whole chart;
`box_labels` override them on the draw box where the field is better
behaved (the R^4 family is nondegenerate off the axis x = y = 0).

Coordinate order of the R^4 family is (x, y, u, v).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from classify import (
    ClassificationResult,
    classify_points,
    conformal_check,
    numerical_rank,
    twisted_check,
)
from config import DEFAULT_SEED, RANK_TOL
from geometry import BivectorField, Chart, ThreeForm

logger = logging.getLogger(__name__)

LABEL_KEYS = ("poisson", "foliated", "weakly_foliated")

Box = Tuple[Tuple[float, float], ...]


@dataclass(frozen=True)
class Label:
    value: bool
    provenance: str

    def __post_init__(self):
        if not self.provenance.strip():
            raise ValueError("a ground-truth label needs a provenance note")

    def to_json(self) -> Dict:
        return {"value": self.value, "provenance": self.provenance}


def _labels(**entries: Tuple[bool, str]) -> Dict[str, Label]:
    missing = set(LABEL_KEYS) - set(entries)
    if missing:
        raise ValueError(f"missing labels: {sorted(missing)}")
    return {key: Label(*entries[key]) for key in LABEL_KEYS}


@dataclass(frozen=True, eq=False)
class CatalogEntry:
    name: str
    description: str
    coords: Tuple[str, ...]
    pi_entries: Mapping[Tuple[int, int], str]
    hamiltonian: str
    labels: Dict[str, Label]
    box: Box
    box_labels: Optional[Dict[str, Label]] = None
    axis_points: Tuple[Tuple[float, ...], ...] = ()
    companion_entries: Optional[Mapping[Tuple[int, int], str]] = None
    phi_entries: Optional[Mapping[Tuple[int, int, int], str]] = None
    conformal_factor: Optional[str] = None
    conformal_base_entries: Optional[Mapping[Tuple[int, int], str]] = None

    @cached_property
    def chart(self) -> Chart:
        return Chart(self.coords)

    @cached_property
    def pi(self) -> BivectorField:
        return BivectorField.from_upper(self.chart, self.pi_entries)

    @cached_property
    def companion(self) -> Optional[BivectorField]:
        if self.companion_entries is None:
            return None
        return BivectorField.from_upper(self.chart, self.companion_entries)

    @cached_property
    def phi(self) -> Optional[ThreeForm]:
        if self.phi_entries is None:
            return None
        return ThreeForm.from_upper(self.chart, self.phi_entries)

    @cached_property
    def conformal_base(self) -> Optional[BivectorField]:
        if self.conformal_base_entries is None:
            return None
        return BivectorField.from_upper(self.chart, self.conformal_base_entries)

    def labels_on_box(self) -> Dict[str, Label]:
        return self.box_labels if self.box_labels is not None else self.labels

    def sample_points(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """`count` uniform draws from the box, followed by the entry's axis points."""
        points = self.chart.sample(rng, count, self.box)
        if self.axis_points:
            points = np.vstack([points, np.array(self.axis_points, dtype=float)])
        return points

    def to_json(self) -> Dict:
        return {
            "name": self.name,
            "description": self.description,
            "coords": list(self.coords),
            "hamiltonian": self.hamiltonian,
            "labels": {k: v.to_json() for k, v in self.labels.items()},
            "box": [list(side) for side in self.box],
        }


# ---------------------------------------------------------------------------
# Entries
# ---------------------------------------------------------------------------

_R4_BOX: Box = ((0.5, 1.0), (-0.5, 0.5), (-1.0, 1.0), (-1.0, 1.0))
_R4_AXIS = ((0.0, 0.0, 0.0, 0.0), (0.0, 0.0, 0.5, -0.3), (0.0, 0.0, -0.7, 0.9), (0.0, 0.4, 0.2, 0.1))


def _r4_entry(power: int) -> CatalogEntry:
    coefficient = "1" if power == 0 else "x"
    zero_set = "the axis x = y = 0" if power == 0 else "the plane x = 0"
    return CatalogEntry(
        name=f"r4_weak_i{power}",
        description=f"{coefficient} d/dx ^ d/du + (x^2+y^2) d/dy ^ d/dv on R^4",
        coords=("x", "y", "u", "v"),
        pi_entries={(0, 2): coefficient, (1, 3): "x^2 + y^2"},
        hamiltonian="u + v/10",
        labels=_labels(
            poisson=(False, f"[pi,pi] = 4 x^{power + 1} d/dy ^ d/du ^ d/dv does not vanish"),
            foliated=(False, f"[pi_sharp(du), pi_sharp(dv)] = 2 x^{power + 1} d/dy needs the coefficient "
                                   f"2 x^{power + 1}/(x^2+y^2), which is not smooth on the axis"),
            weakly_foliated=(True, f"every bracket of Hamiltonian-type fields is a multiple of x and vanishes on {zero_set} "
                                   "where the image drops"),
        ),
        box=_R4_BOX,
        box_labels=_labels(
            poisson=(False, f"[pi,pi] = 4 x^{power + 1} d/dy ^ d/du ^ d/dv with x >= 0.5"),
            foliated=(True, "nondegenerate for x != 0, so the image is the whole tangent space"),
            weakly_foliated=(True, "foliated fields are weakly foliated"),
        ),
        axis_points=_R4_AXIS,
        phi_entries={(0, 1, 3): "2*x/(x^2 + y^2)^2"},
    )


def _build_entries() -> Dict[str, CatalogEntry]:
    entries = [
        CatalogEntry(
            name="symplectic2d",
            description="canonical symplectic structure d/dq ^ d/dp on R^2",
            coords=("q", "p"),
            pi_entries={(0, 1): "1"},
            hamiltonian="(q^2 + p^2)/2",
            labels=_labels(
                poisson=(True, "constant coefficients: [pi,pi] = 0"),
                foliated=(True, "nondegenerate: the image is the whole tangent space"),
                weakly_foliated=(True, "foliated fields are weakly foliated"),
            ),
            box=((-1.0, 1.0), (-1.0, 1.0)),
        ),
        CatalogEntry(
            name="linear_so3",
            description="Lie-Poisson structure of so(3): pi^{12} = x3 and cyclic",
            coords=("x1", "x2", "x3"),
            pi_entries={(0, 1): "x3", (0, 2): "-x2", (1, 2): "x1"},
            hamiltonian="(x1^2 + 2*x2^2 + 3*x3^2)/2",
            labels=_labels(
                poisson=(True, "linear Poisson structure of a Lie algebra dual"),
                foliated=(True, "Poisson structures are foliated (symplectic leaves are the spheres)"),
                weakly_foliated=(True, "foliated fields are weakly foliated"),
            ),
            box=((-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)),
        ),
        CatalogEntry(
            name="r3_nonfoliated",
            description="x d/dx ^ d/dy + d/dz ^ d/dy + d/dx ^ d/dz on R^3",
            coords=("x", "y", "z"),
            pi_entries={(0, 1): "x", (0, 2): "1", (1, 2): "-1"},
            hamiltonian="y",
            labels=_labels(
                poisson=(False, "[pi,pi] is a nonzero constant multiple of d/dx ^ d/dy ^ d/dz"),
                foliated=(False, "[pi_sharp(dy), pi_sharp(dz)] = -d/dx never lies in the rank-2 image"),
                weakly_foliated=(False, "the same bracket fails pointwise everywhere"),
            ),
            box=((-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)),
        ),
        _r4_entry(0),
        _r4_entry(1),
        CatalogEntry(
            name="pia_pib_pair",
            description="(x^2+y^2) d/dx ^ d/dy with companion (x^2+y^2)^2 d/dx ^ d/dy",
            coords=("x", "y"),
            pi_entries={(0, 1): "x^2 + y^2"},
            hamiltonian="x",
            labels=_labels(
                poisson=(True, "every bivector field on a 2-dimensional manifold is Poisson"),
                foliated=(True, "Poisson structures are foliated"),
                weakly_foliated=(True, "foliated fields are weakly foliated"),
            ),
            box=((-1.0, 1.0), (-1.0, 1.0)),
            companion_entries={(0, 1): "(x^2 + y^2)^2"},
        ),
        CatalogEntry(
            name="conformal_times_symplectic",
            description="(1 + x1^2 + x2^2) times the canonical symplectic structure on R^4",
            coords=("x1", "x2", "x3", "x4"),
            pi_entries={(0, 2): "1 + x1^2 + x2^2", (1, 3): "1 + x1^2 + x2^2"},
            hamiltonian="(x1^2 + x2^2 + x3^2 + x4^2)/2",
            labels=_labels(
                poisson=(False, "a non-constant conformal factor breaks [pi,pi] = 0 in dimension 4"),
                foliated=(True, "conformally Poisson structures are foliated"),
                weakly_foliated=(True, "foliated fields are weakly foliated"),
            ),
            box=((-0.5, 0.5),) * 4,
            conformal_factor="1 + x1^2 + x2^2",
            conformal_base_entries={(0, 2): "1", (1, 3): "1"},
        ),
    ]
    return {entry.name: entry for entry in entries}


CATALOG: Dict[str, CatalogEntry] = _build_entries()


def get_entry(name: str) -> CatalogEntry:
    try:
        return CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown catalog entry {name!r}; available: {', '.join(sorted(CATALOG))}") from None


def list_entries() -> List[str]:
    return list(CATALOG)


# ---------------------------------------------------------------------------
# Self-check
# ---------------------------------------------------------------------------

@dataclass
class SelfCheck:
    name: str
    passed: bool
    classification: ClassificationResult
    failures: List[str] = field(default_factory=list)


def self_check(entry: CatalogEntry, count: int = 50, seed: int = DEFAULT_SEED,
               tol: float = RANK_TOL) -> SelfCheck:
    """
    Classify the entry at `count` box points plus its axis points and compare
    with the labels: Poisson and weak foliation must agree, a foliated label
    must come with weak foliation, and the optional companion, twisted 3-form
    and conformal data must check out.
    """
    points = entry.sample_points(np.random.default_rng(seed), count)
    box_points = points[:count]
    result = classify_points(entry.pi, points, tol, H=entry.hamiltonian, field_name=entry.name)
    failures: List[str] = []
    labels = entry.labels

    if result.evaluated and result.poisson != labels["poisson"].value:
        failures.append(f"poisson: classified {result.poisson}, labelled {labels['poisson'].value}")
    weak = result.weakly_foliated
    if labels["weakly_foliated"].value and not weak:
        failures.append("weakly_foliated: a sample point fails the pointwise test")
    if not labels["weakly_foliated"].value and weak:
        failures.append("weakly_foliated: no sample point witnesses the failure")
    if labels["foliated"].value and not weak:
        failures.append("foliated label without pointwise weak foliation")

    if entry.companion is not None:
        mismatched = [
            p for p in box_points
            if numerical_rank(entry.pi.at(p), tol) != numerical_rank(entry.companion.at(p), tol)
        ]
        if mismatched:
            failures.append(f"companion image differs at {len(mismatched)} point(s)")

    if entry.phi is not None:
        twisted = twisted_check(entry.pi, entry.phi, box_points)
        if not twisted.passed:
            failures.append(
                f"twisted pair: bracket residual {twisted.bracket_residual:.3e}, "
                f"closedness {twisted.closedness_residual:.3e}"
            )

    if entry.conformal_factor is not None and entry.conformal_base is not None:
        conformal = conformal_check(entry.conformal_base, entry.conformal_factor, box_points)
        if not conformal.passed:
            failures.append(f"conformal bracket formula residual {conformal.max_residual:.3e}")

    if failures:
        logger.warning(f"Self-check failed for {entry.name}: {'; '.join(failures)}")
    else:
        logger.info(f"✓ Self-check passed for {entry.name}")
    return SelfCheck(entry.name, not failures, result, failures)
