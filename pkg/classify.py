"""
Pointwise classification of bivector fields.

Every test here is evaluated at explicit sample points: Poisson (vanishing
[pi,pi]), weakly foliated (brackets of pi_sharp(dx_i) stay in Im pi_sharp),
Jacobiator in the image of wedge^3 pi_sharp, twisted pairs, the (1,1) tensor
C_H with (L_{X_H} pi)_sharp = C_H o pi_sharp, and rank profiles.

Numerical rank counts singular values above tol * sigma_max. Image
membership compares rank([P | b]) with rank(P) under the threshold of P.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from batch_processor import process_items
from config import POISSON_TOL, RANK_TOL
from errors import EvaluationError
from expr import evaluate
from geometry import (
    BivectorField,
    ExprLike,
    ThreeForm,
    exterior_derivative_3form,
    gradient_field,
    hamiltonian_vf,
    lie_derivative_pi,
    permutation_sign,
    schouten_pi_pi,
    wedge3_pi_sharp,
)

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Linear algebra helpers
# ---------------------------------------------------------------------------

def _rank_threshold(matrix: np.ndarray, tol: float) -> float:
    s = np.linalg.svd(matrix, compute_uv=False)
    smax = float(s[0]) if s.size else 0.0
    return tol * smax if smax > 0 else tol


def numerical_rank(matrix: np.ndarray, tol: float = RANK_TOL, threshold: Optional[float] = None) -> int:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if threshold is None:
        threshold = _rank_threshold(matrix, tol)
    s = np.linalg.svd(matrix, compute_uv=False)
    return int(np.sum(s > threshold))


def in_image(matrix: np.ndarray, vectors: np.ndarray, tol: float = RANK_TOL) -> bool:
    """True iff every column of `vectors` lies in the column space of `matrix`."""
    matrix = np.asarray(matrix, dtype=float)
    vectors = np.asarray(vectors, dtype=float).reshape(matrix.shape[0], -1)
    threshold = _rank_threshold(matrix, tol)
    base = numerical_rank(matrix, threshold=threshold)
    return numerical_rank(np.hstack([matrix, vectors]), threshold=threshold) == base


def kernel_basis(matrix: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis of ker(matrix) as columns."""
    matrix = np.asarray(matrix, dtype=float)
    _, s, vh = np.linalg.svd(matrix)
    rank = int(np.sum(s > _rank_threshold(matrix, tol)))
    return vh[rank:].T


def coordinate_brackets(pi: BivectorField, point) -> np.ndarray:
    """B[i, j] = [pi_sharp(dx_i), pi_sharp(dx_j)] at `point`, shape (n, n, n)."""
    P = pi.at(point)
    dP = pi.derivative_at(point)
    # pi_sharp(dx_i) has components P[:, i]; A[i, j, k] = sum_l P[l, i] d_l P[k, j]
    A = np.einsum("li,lkj->ijk", P, dP)
    return A - np.transpose(A, (1, 0, 2))


# ---------------------------------------------------------------------------
# Pointwise tests
# ---------------------------------------------------------------------------

def is_poisson_at(pi: BivectorField, point, tol: float = POISSON_TOL) -> Tuple[bool, float]:
    """Returns (verdict, max |[pi,pi]^{ijk}(p)|)."""
    bracket = schouten_pi_pi(pi)
    residual = float(np.max(np.abs(bracket.at(point)), initial=0.0))
    return residual <= tol, residual


def weakly_foliated_at(pi: BivectorField, point, tol: float = RANK_TOL) -> Tuple[bool, List[Tuple[int, int]]]:
    """
    Returns (verdict, failing coordinate pairs). Testing the coordinate
    1-forms is enough: for function coefficients the extra bracket terms
    are multiples of pi_sharp(alpha) and pi_sharp(beta).
    """
    P = pi.at(point)
    brackets = coordinate_brackets(pi, point)
    n = pi.chart.dimension
    witness = [(i, j) for i, j in itertools.combinations(range(n), 2) if not in_image(P, brackets[i, j], tol)]
    return not witness, witness


def _alternating_basis(n: int, triple: Tuple[int, int, int], value: float = 1.0) -> np.ndarray:
    basis = np.zeros((n, n, n))
    for perm in itertools.permutations(range(3)):
        basis[tuple(triple[p] for p in perm)] = value * permutation_sign(perm)
    return basis


def _wedge3_system(pi: BivectorField, point) -> Tuple[np.ndarray, List[Tuple[int, int, int]]]:
    """Matrix of omega -> wedge^3 pi_sharp(omega) on increasing index triples."""
    n = pi.chart.dimension
    triples = list(itertools.combinations(range(n), 3))
    P = pi.at(point)
    columns = []
    for triple in triples:
        image = np.einsum("ia,jb,kc,abc->ijk", P, P, P, _alternating_basis(n, triple))
        columns.append([image[t] for t in triples])
    return np.array(columns, dtype=float).T, triples


def jacobiator_in_image_at(pi: BivectorField, point, tol: float = 1e-9) -> Tuple[bool, Optional[np.ndarray], float]:
    """
    Least-squares solve of wedge^3 pi_sharp(omega) = [pi,pi] at `point`.

    Returns (verdict, omega as a full (n,n,n) antisymmetric array or None,
    residual). The residual is relative to max(1, max |[pi,pi]|).
    """
    n = pi.chart.dimension
    if n < 3:
        return True, np.zeros((n, n, n)), 0.0
    system, triples = _wedge3_system(pi, point)
    target_full = schouten_pi_pi(pi).at(point)
    target = np.array([target_full[t] for t in triples])
    coeffs, *_ = np.linalg.lstsq(system, target, rcond=None)
    scale = max(1.0, float(np.max(np.abs(target))))
    residual = float(np.max(np.abs(system @ coeffs - target))) / scale
    omega = sum(_alternating_basis(n, t, float(v)) for v, t in zip(coeffs, triples))
    ok = residual <= tol
    return ok, (omega if ok else None), residual


@dataclass
class TwistedReport:
    bracket_residual: float
    closedness_residual: float
    points_checked: int
    passed: bool


def twisted_check(pi: BivectorField, phi: ThreeForm, sample: Sequence[Sequence[float]],
                  tol: float = 1e-9) -> TwistedReport:
    """Checks 1/2 [pi,pi] = wedge^3 pi_sharp(phi) and d phi = 0 at every sample point."""
    bracket = schouten_pi_pi(pi)
    d_phi = exterior_derivative_3form(phi)
    bracket_residual = 0.0
    closedness_residual = 0.0
    for point in sample:
        mismatch = 0.5 * bracket.at(point) - wedge3_pi_sharp(pi, phi, point)
        bracket_residual = max(bracket_residual, float(np.max(np.abs(mismatch), initial=0.0)))
        closedness_residual = max(closedness_residual, float(np.max(np.abs(d_phi.at(point)), initial=0.0)))
    passed = bracket_residual <= tol and closedness_residual <= tol
    logger.debug(f"twisted_check: bracket {bracket_residual:.3e}, closedness {closedness_residual:.3e}")
    return TwistedReport(bracket_residual, closedness_residual, len(sample), passed)


def solve_C_H_at(pi: BivectorField, H: ExprLike, point, tol: float = 1e-10) -> Tuple[np.ndarray, float, bool]:
    """
    Least-squares C with C @ pi_sharp = (L_{X_H} pi)_sharp at `point`.
    Returns (C, Frobenius residual, residual <= tol).
    """
    P = pi.at(point)
    L = lie_derivative_pi(pi, hamiltonian_vf(pi, H)).at(point)
    # C P = L  <=>  P^T C^T = L^T
    C_T, *_ = np.linalg.lstsq(P.T, L.T, rcond=None)
    C = C_T.T
    residual = float(np.linalg.norm(C @ P - L))
    return C, residual, residual <= tol


def lie_image_inclusion_at(pi: BivectorField, H: ExprLike, point, tol: float = RANK_TOL) -> bool:
    """Im (L_{X_H} pi)_sharp is contained in Im pi_sharp at `point`."""
    P = pi.at(point)
    L = lie_derivative_pi(pi, hamiltonian_vf(pi, H)).at(point)
    return in_image(P, L, tol)


@dataclass
class ConformalReport:
    max_residual: float
    points_checked: int
    passed: bool


def conformal_check(pi_prime: BivectorField, f: ExprLike, sample: Sequence[Sequence[float]],
                    tol: float = 1e-9) -> ConformalReport:
    """
    For pi = f pi' with pi' Poisson, checks on coordinate functions F, G that
    [X_F, X_G] = pi_sharp(f d{F,G}' + X'_F[f] dG - X'_G[f] dF).
    """
    chart = pi_prime.chart
    n = chart.dimension
    f_expr = chart.expr(f)
    pi = pi_prime.scaled(f_expr)
    coords = [chart.expr(name) for name in chart.names]
    identity = np.eye(n)
    worst = 0.0
    for a, b in itertools.combinations(range(n), 2):
        X_F, X_G = hamiltonian_vf(pi, coords[a]), hamiltonian_vf(pi, coords[b])
        Xp_F, Xp_G = hamiltonian_vf(pi_prime, coords[a]), hamiltonian_vf(pi_prime, coords[b])
        lhs = X_F.bracket(X_G)
        d_bracket = gradient_field(chart, Xp_F.apply(coords[b]))
        df_F, df_G = Xp_F.apply(f_expr), Xp_G.apply(f_expr)
        for point in sample:
            alpha = (
                evaluate(f_expr, point) * d_bracket.at(point)
                + evaluate(df_F, point) * identity[b]
                - evaluate(df_G, point) * identity[a]
            )
            rhs = pi.at(point) @ alpha
            worst = max(worst, float(np.max(np.abs(lhs.at(point) - rhs))))
    return ConformalReport(worst, len(sample), worst <= tol)


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

@dataclass
class RankProfile:
    points: np.ndarray
    ranks: np.ndarray
    regular: np.ndarray
    grid_shape: Tuple[int, ...]

    def to_json(self) -> Dict:
        return {
            "grid_shape": list(self.grid_shape),
            "records": [
                {"point": [float(v) for v in p], "rank": int(r), "regular": bool(g)}
                for p, r, g in zip(self.points, self.ranks, self.regular)
            ],
        }


def grid_points(box: Sequence[Tuple[float, float]], per_axis: int) -> Tuple[np.ndarray, Tuple[int, ...]]:
    """Tensor grid over `box` with `per_axis` nodes per side, shape (per_axis**n, n)."""
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=-1)
    return points, tuple(len(a) for a in axes)


def rank_profile(pi: BivectorField, box: Sequence[Tuple[float, float]], per_axis: int,
                 tol: float = RANK_TOL) -> RankProfile:
    """
    Rank of pi_sharp at every node of a tensor grid. A node is flagged
    regular when every grid neighbour has the same rank.
    """
    points, shape = grid_points(box, per_axis)
    ranks = np.array([numerical_rank(pi.at(p), tol) for p in points], dtype=int)
    grid = ranks.reshape(shape)
    regular = np.ones(shape, dtype=bool)
    for axis in range(len(shape)):
        same = np.diff(grid, axis=axis) == 0
        before = [slice(None)] * len(shape)
        after = [slice(None)] * len(shape)
        before[axis] = slice(0, -1)
        after[axis] = slice(1, None)
        regular[tuple(before)] &= same
        regular[tuple(after)] &= same
    return RankProfile(points, ranks, regular.ravel(), shape)


@dataclass
class PointRecord:
    point: List[float]
    rank: int
    poisson_residual: Optional[float]
    weakly_foliated: bool
    witness: Optional[List[List[str]]] = None
    jacobiator_in_image: Optional[bool] = None
    lie_image_inclusion: Optional[bool] = None
    error: Optional[str] = None


@dataclass
class ClassificationResult:
    field_name: str
    records: List[PointRecord] = field(default_factory=list)
    tol: float = RANK_TOL

    @property
    def evaluated(self) -> List[PointRecord]:
        return [r for r in self.records if r.error is None]

    @property
    def poisson(self) -> bool:
        return all(r.poisson_residual <= POISSON_TOL for r in self.evaluated)

    @property
    def weakly_foliated(self) -> bool:
        return all(r.weakly_foliated for r in self.evaluated)

    def summary(self) -> Dict:
        evaluated = self.evaluated
        return {
            "field": self.field_name,
            "points": len(self.records),
            "evaluated": len(evaluated),
            "errors": len(self.records) - len(evaluated),
            "poisson": self.poisson,
            "weakly_foliated": self.weakly_foliated,
            "weakly_foliated_points": sum(1 for r in evaluated if r.weakly_foliated),
            "max_poisson_residual": max((r.poisson_residual for r in evaluated), default=0.0),
            "ranks": sorted({r.rank for r in evaluated}),
        }

    def to_json(self) -> Dict:
        return {"summary": self.summary(), "records": [asdict(r) for r in self.records]}


def classify_point(pi: BivectorField, point, tol: float = RANK_TOL, H: Optional[ExprLike] = None) -> PointRecord:
    names = pi.chart.names
    p = np.asarray(point, dtype=float)
    _, residual = is_poisson_at(pi, p)
    weak, witness = weakly_foliated_at(pi, p, tol)
    in_image_ok, _, _ = jacobiator_in_image_at(pi, p)
    record = PointRecord(
        point=[float(v) for v in p],
        rank=numerical_rank(pi.at(p), tol),
        poisson_residual=residual,
        weakly_foliated=weak,
        witness=None if weak else [[f"d{names[i]}", f"d{names[j]}"] for i, j in witness],
        jacobiator_in_image=in_image_ok,
    )
    if H is not None:
        record.lie_image_inclusion = lie_image_inclusion_at(pi, H, p, tol)
    return record


def classify_points(pi: BivectorField, points: Sequence[Sequence[float]], tol: float = RANK_TOL,
                    H: Optional[ExprLike] = None, field_name: str = "field",
                    workers: Optional[int] = None) -> ClassificationResult:
    """Classify every point; points where a coefficient is singular become error records."""
    logger.info("=" * 80)
    logger.info(f"CLASSIFY - {field_name} at {len(points)} point(s)")
    logger.info("=" * 80)
    outcomes = process_items(
        lambda p: classify_point(pi, p, tol, H),
        list(points),
        label="point",
        workers=workers,
        recoverable=(EvaluationError,),
    )
    records = []
    for outcome, point in zip(outcomes, points):
        if outcome["status"] == "success":
            records.append(outcome["result"])
        else:
            logger.warning(f"Skipped point {list(point)}: {outcome['error']}")
            records.append(PointRecord([float(v) for v in point], -1, None, False, error=outcome["error"]))
    result = ClassificationResult(field_name, records, tol)
    summary = result.summary()
    logger.info(
        f"CLASSIFY - done: poisson={summary['poisson']}, weakly_foliated={summary['weakly_foliated']}, "
        f"max residual {summary['max_poisson_residual']:.3e}"
    )
    return result
