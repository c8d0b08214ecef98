"""
Charts, tensor fields and the pointwise geometry of bivector fields.

Conventions used throughout the package:
    pi_sharp:     v^i = sum_j pi^{ij} xi_j, and pi(xi, eta) = <pi_sharp(xi), eta>
    Schouten:     [pi,pi]^{ijk} = 2 sum_l (pi^{il} d_l pi^{jk} + pi^{jl} d_l pi^{ki} + pi^{kl} d_l pi^{ij})
    connection:   nabla_{d_i} d_j = Gamma^k_{ij} d_k, stored as G[k, i, j]
    torsion:      T^k_{ij} = Gamma^k_{ij} - Gamma^k_{ji}

Field types hold ScalarExpr components and compile them once to numpy
evaluators. `at(point)` accepts a single point of shape (n,) or a stack of
points of shape (K, n); the stacked result gets a leading K axis.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import ClassVar, Dict, Iterable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from errors import DimensionError, EvaluationError
from expr import ZERO, Const, ScalarExpr, Var, add, as_expr, compile_exprs, mul, neg, parse, sub

logger = logging.getLogger(__name__)

ExprLike = Union[ScalarExpr, str, float, int]


def _evaluate(evaluator, shape: Tuple[int, ...], point) -> np.ndarray:
    p = np.asarray(point, dtype=float)
    if p.ndim == 1:
        return evaluator(p).reshape(shape)
    values = evaluator(p.T)
    return np.moveaxis(values.reshape(shape + (p.shape[0],)), -1, 0)


def permutation_sign(perm: Sequence[int]) -> int:
    inversions = sum(1 for a, b in itertools.combinations(perm, 2) if a > b)
    return -1 if inversions % 2 else 1


# ---------------------------------------------------------------------------
# Chart
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Chart:
    """An open subset of R^n with named coordinates and optional box bounds."""

    names: Tuple[str, ...]
    bounds: Optional[Tuple[Tuple[float, float], ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if not self.names:
            raise DimensionError("a chart needs at least one coordinate")
        if len(set(self.names)) != len(self.names):
            raise DimensionError(f"duplicate coordinate names: {self.names}")
        if self.bounds is not None:
            bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
            if len(bounds) != len(self.names):
                raise DimensionError(f"{len(bounds)} bounds for {len(self.names)} coordinates")
            if any(not lo < hi for lo, hi in bounds):
                raise DimensionError(f"chart bounds must have positive volume: {bounds}")
            object.__setattr__(self, "bounds", bounds)

    @property
    def dimension(self) -> int:
        return len(self.names)

    def expr(self, value: ExprLike) -> ScalarExpr:
        if isinstance(value, str):
            return parse(value, self.names)
        return as_expr(value)

    def point(self, p: Sequence[float]) -> np.ndarray:
        arr = np.asarray(p, dtype=float)
        if arr.shape[-1:] != (self.dimension,):
            raise DimensionError(f"expected points of dimension {self.dimension}, got shape {arr.shape}")
        return arr

    def contains(self, p: Sequence[float]) -> bool:
        arr = np.asarray(p, dtype=float)
        if not np.all(np.isfinite(arr)):
            return False
        if self.bounds is None:
            return True
        lo, hi = np.array(self.bounds).T
        return bool(np.all((arr >= lo) & (arr <= hi)))

    def sample(self, rng: np.random.Generator, count: int,
               box: Optional[Sequence[Tuple[float, float]]] = None) -> np.ndarray:
        """Uniform points in `box` (or in the chart bounds). Returns shape (count, n)."""
        region = box if box is not None else self.bounds
        if region is None:
            raise DimensionError("sampling needs a box: the chart has no bounds")
        lo, hi = np.array(region, dtype=float).T
        if lo.shape != (self.dimension,):
            raise DimensionError(f"sampling box has {lo.shape[0]} sides for dimension {self.dimension}")
        return lo + (hi - lo) * rng.random((count, self.dimension))


# ---------------------------------------------------------------------------
# Fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class _ComponentField:
    chart: Chart
    components: Tuple[ScalarExpr, ...]

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.chart.expr(c) for c in self.components))
        if len(self.components) != self.chart.dimension:
            raise DimensionError(
                f"{type(self).__name__} needs {self.chart.dimension} components, got {len(self.components)}"
            )

    @cached_property
    def _evaluator(self):
        return compile_exprs(self.components, self.chart.dimension)

    @cached_property
    def jacobian(self) -> Tuple[Tuple[ScalarExpr, ...], ...]:
        """jacobian[i][j] = d_j of component i."""
        n = self.chart.dimension
        return tuple(tuple(c.diff(j) for j in range(n)) for c in self.components)

    @cached_property
    def _jacobian_evaluator(self):
        return compile_exprs(tuple(itertools.chain.from_iterable(self.jacobian)), self.chart.dimension)

    def at(self, point) -> np.ndarray:
        return _evaluate(self._evaluator, (self.chart.dimension,), point)

    def jacobian_at(self, point) -> np.ndarray:
        n = self.chart.dimension
        return _evaluate(self._jacobian_evaluator, (n, n), point)

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.components)


class VectorField(_ComponentField):
    """Vector field X = X^i d_i."""

    def apply(self, f: ScalarExpr) -> ScalarExpr:
        """Directional derivative X[f]."""
        total = ZERO
        for i, c in enumerate(self.components):
            total = add(total, mul(c, f.diff(i)))
        return total

    def bracket(self, other: "VectorField") -> "VectorField":
        """Lie bracket [X, Y]^i = X[Y^i] - Y[X^i]."""
        return VectorField(
            self.chart,
            tuple(sub(self.apply(y), other.apply(x)) for x, y in zip(self.components, other.components)),
        )


class CovectorField(_ComponentField):
    """1-form with components alpha_i."""


def gradient_field(chart: Chart, f: ExprLike) -> CovectorField:
    """The differential df."""
    expr = chart.expr(f)
    return CovectorField(chart, tuple(expr.diff(i) for i in range(chart.dimension)))


@dataclass(frozen=True, eq=False)
class _AlternatingField:
    """
    Totally antisymmetric tensor field of fixed degree. `components` is the
    full row-major n^degree table; build instances with from_upper().
    """

    chart: Chart
    components: Tuple[ScalarExpr, ...]
    degree: ClassVar[int] = 0

    def __post_init__(self):
        expected = self.chart.dimension ** self.degree
        if len(self.components) != expected:
            raise DimensionError(f"{type(self).__name__} needs {expected} components, got {len(self.components)}")

    @classmethod
    def from_upper(cls, chart: Chart, entries: Mapping[Tuple[int, ...], ExprLike]):
        """Build from components with strictly increasing indices; the rest follows by antisymmetry."""
        n = chart.dimension
        table = {}
        for key, value in entries.items():
            key = tuple(int(k) for k in key)
            if len(key) != cls.degree or any(k < 0 or k >= n for k in key):
                raise DimensionError(f"bad index {key} for a degree-{cls.degree} field on a {n}-dimensional chart")
            if any(a >= b for a, b in zip(key, key[1:])):
                raise DimensionError(f"index {key} must be strictly increasing")
            expr = chart.expr(value)
            for perm in itertools.permutations(range(cls.degree)):
                idx = tuple(key[p] for p in perm)
                table[idx] = expr if permutation_sign(perm) > 0 else neg(expr)
        components = tuple(
            table.get(idx, ZERO) for idx in itertools.product(range(n), repeat=cls.degree)
        )
        return cls(chart, components)

    @classmethod
    def zero(cls, chart: Chart):
        return cls(chart, (ZERO,) * chart.dimension ** cls.degree)

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.chart.dimension,) * self.degree

    def component(self, *idx: int) -> ScalarExpr:
        return self.components[int(np.ravel_multi_index(idx, self.shape))]

    def upper(self) -> Dict[Tuple[int, ...], ScalarExpr]:
        """Non-zero components with strictly increasing indices."""
        return {
            idx: self.component(*idx)
            for idx in itertools.combinations(range(self.chart.dimension), self.degree)
            if not self.component(*idx).is_zero()
        }

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.components)

    @cached_property
    def _evaluator(self):
        return compile_exprs(self.components, self.chart.dimension)

    @cached_property
    def _derivative_evaluator(self):
        n = self.chart.dimension
        return compile_exprs(tuple(c.diff(l) for l in range(n) for c in self.components), n)

    def at(self, point) -> np.ndarray:
        return _evaluate(self._evaluator, self.shape, point)

    def derivative_at(self, point) -> np.ndarray:
        """Partial derivatives with the differentiation index first: D[l, ...] = d_l T[...]."""
        return _evaluate(self._derivative_evaluator, (self.chart.dimension,) + self.shape, point)

    def scaled(self, f: ExprLike):
        expr = self.chart.expr(f)
        return type(self)(self.chart, tuple(mul(expr, c) for c in self.components))


class BivectorField(_AlternatingField):
    """Bivector field pi = sum_{i<j} pi^{ij} d_i ^ d_j."""

    degree = 2

    def sharp_at(self, point, xi) -> np.ndarray:
        return pi_sharp(self, point, xi)


class TrivectorField(_AlternatingField):
    degree = 3


class ThreeForm(_AlternatingField):
    degree = 3


class FourForm(_AlternatingField):
    degree = 4


# ---------------------------------------------------------------------------
# Connections
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ConnectionSpec:
    """
    Linear connection given by Christoffel symbols, christoffel[k][i][j] = Gamma^k_{ij}.

    `torsion_free` is an assertion: it is checked at construction.
    """

    chart: Chart
    christoffel: Tuple[Tuple[Tuple[ScalarExpr, ...], ...], ...]
    torsion_free: bool = False
    name: str = "custom"

    def __post_init__(self):
        n = self.chart.dimension
        table = tuple(
            tuple(tuple(self.chart.expr(g) for g in row) for row in plane) for plane in self.christoffel
        )
        if len(table) != n or any(len(plane) != n or any(len(row) != n for row in plane) for plane in table):
            raise DimensionError(f"Christoffel symbols must form an {n}x{n}x{n} table")
        object.__setattr__(self, "christoffel", table)
        if self.torsion_free:
            self._assert_torsion_free()

    def _assert_torsion_free(self) -> None:
        n = self.chart.dimension
        asym = [
            sub(self.christoffel[k][i][j], self.christoffel[k][j][i])
            for k in range(n) for i in range(n) for j in range(i + 1, n)
        ]
        asym = [e for e in asym if not e.is_zero()]
        if not asym:
            return
        rng = np.random.default_rng(0)
        check = compile_exprs(tuple(asym), n)
        for point in rng.uniform(-1.0, 1.0, size=(8, n)):
            try:
                worst = float(np.max(np.abs(check(point))))
            except EvaluationError:
                continue
            if worst > 1e-12:
                raise ValueError(f"connection '{self.name}' is declared torsion-free but has torsion {worst:.3e}")

    @classmethod
    def flat(cls, chart: Chart) -> "ConnectionSpec":
        n = chart.dimension
        zeros = tuple(tuple((ZERO,) * n for _ in range(n)) for _ in range(n))
        return cls(chart, zeros, torsion_free=True, name="flat")

    @classmethod
    def from_entries(cls, chart: Chart, entries: Mapping[Tuple[int, int, int], ExprLike],
                     torsion_free: bool = False, name: str = "custom") -> "ConnectionSpec":
        n = chart.dimension
        table = [[[ZERO] * n for _ in range(n)] for _ in range(n)]
        for (k, i, j), value in entries.items():
            if not all(0 <= idx < n for idx in (k, i, j)):
                raise DimensionError(f"Christoffel index {(k, i, j)} out of range for dimension {n}")
            table[k][i][j] = chart.expr(value)
        return cls(chart, tuple(tuple(tuple(row) for row in plane) for plane in table), torsion_free, name)

    @classmethod
    def random_polynomial(cls, chart: Chart, rng: np.random.Generator, scale: float = 0.5,
                          torsion_free: bool = False) -> "ConnectionSpec":
        """Affine Christoffel symbols Gamma^k_{ij} = c + sum_l d_l x_l with uniform random coefficients."""
        n = chart.dimension

        def draw() -> ScalarExpr:
            expr = Const(float(rng.uniform(-scale, scale)))
            for l in range(n):
                expr = add(expr, mul(Const(float(rng.uniform(-scale, scale))), Var(l)))
            return expr

        table = [[[None] * n for _ in range(n)] for _ in range(n)]
        for k in range(n):
            for i in range(n):
                for j in range(n):
                    if torsion_free and j < i:
                        table[k][i][j] = table[k][j][i]
                    else:
                        table[k][i][j] = draw()
        name = "random-torsion-free" if torsion_free else "random"
        return cls(chart, tuple(tuple(tuple(row) for row in plane) for plane in table), torsion_free, name)

    @cached_property
    def is_flat(self) -> bool:
        return all(g.is_zero() for plane in self.christoffel for row in plane for g in row)

    @cached_property
    def _evaluator(self):
        return compile_exprs(tuple(g for plane in self.christoffel for row in plane for g in row), self.chart.dimension)

    def christoffel_at(self, point) -> np.ndarray:
        """G[k, i, j] = Gamma^k_{ij}, with a leading K axis for stacked points."""
        n = self.chart.dimension
        p = np.asarray(point, dtype=float)
        if self.is_flat:
            return np.zeros(p.shape[:-1] + (n, n, n))
        return _evaluate(self._evaluator, (n, n, n), p)

    def torsion_at(self, point) -> np.ndarray:
        """T[k, i, j] = Gamma^k_{ij} - Gamma^k_{ji}."""
        g = self.christoffel_at(point)
        return g - np.swapaxes(g, -1, -2)


# ---------------------------------------------------------------------------
# Pointwise operations
# ---------------------------------------------------------------------------

def pi_sharp(pi: BivectorField, point, xi) -> np.ndarray:
    """pi_sharp(xi)^i = sum_j pi^{ij} xi_j; stacked points take stacked covectors."""
    matrix = pi.at(point)
    return np.einsum("...ij,...j->...i", matrix, np.asarray(xi, dtype=float))


def bivector_pairing(pi: BivectorField, point, xi, eta) -> float:
    """pi(xi, eta) = <pi_sharp(xi), eta>."""
    return float(np.dot(pi_sharp(pi, point, xi), np.asarray(eta, dtype=float)))


@lru_cache(maxsize=256)
def hamiltonian_vf(pi: BivectorField, H: ExprLike) -> VectorField:
    """X_H = pi_sharp(dH) with symbolic components."""
    chart = pi.chart
    dH = gradient_field(chart, H).components
    n = chart.dimension
    components = []
    for i in range(n):
        total = ZERO
        for j in range(n):
            total = add(total, mul(pi.component(i, j), dH[j]))
        components.append(total)
    return VectorField(chart, tuple(components))


def poisson_bracket(pi: BivectorField, F: ExprLike, G: ExprLike) -> ScalarExpr:
    """{F, G} = pi(dF, dG) = <X_F, dG>."""
    return hamiltonian_vf(pi, F).apply(pi.chart.expr(G))


def jacobiator(pi: BivectorField, F: ExprLike, G: ExprLike, K: ExprLike) -> ScalarExpr:
    """Cyclic sum {F,{G,K}} + {G,{K,F}} + {K,{F,G}}."""
    chart = pi.chart
    F, G, K = chart.expr(F), chart.expr(G), chart.expr(K)
    total = ZERO
    for a, b, c in ((F, G, K), (G, K, F), (K, F, G)):
        total = add(total, poisson_bracket(pi, a, poisson_bracket(pi, b, c)))
    return total


@lru_cache(maxsize=256)
def schouten_pi_pi(pi: BivectorField) -> TrivectorField:
    """The Schouten self-bracket [pi, pi]; twice the Jacobiator of coordinate functions."""
    chart = pi.chart
    n = chart.dimension
    entries = {}
    for i, j, k in itertools.combinations(range(n), 3):
        total = ZERO
        for l in range(n):
            for a, b, c in ((i, j, k), (j, k, i), (k, i, j)):
                total = add(total, mul(pi.component(a, l), pi.component(b, c).diff(l)))
        entries[(i, j, k)] = mul(Const(2.0), total)
    return TrivectorField.from_upper(chart, entries)


@lru_cache(maxsize=256)
def lie_derivative_pi(pi: BivectorField, X: VectorField) -> BivectorField:
    """(L_X pi)^{ij} = sum_l X^l d_l pi^{ij} - pi^{lj} d_l X^i - pi^{il} d_l X^j."""
    chart = pi.chart
    n = chart.dimension
    jac = X.jacobian
    entries = {}
    for i, j in itertools.combinations(range(n), 2):
        total = ZERO
        for l in range(n):
            total = add(total, mul(X.components[l], pi.component(i, j).diff(l)))
            total = sub(total, mul(pi.component(l, j), jac[i][l]))
            total = sub(total, mul(pi.component(i, l), jac[j][l]))
        entries[(i, j)] = total
    return BivectorField.from_upper(chart, entries)


def k_matrix(jacobian: np.ndarray, christoffel: np.ndarray, field_value: np.ndarray) -> np.ndarray:
    """
    K^i_j = d_j X^i + Gamma^i_{jl} X^l + T^i_{lj} X^l from pointwise data.
    Works on a single point or on a leading stack axis.
    """
    torsion = christoffel - np.swapaxes(christoffel, -1, -2)
    return (
        jacobian
        + np.einsum("...ijl,...l->...ij", christoffel, field_value)
        + np.einsum("...ilj,...l->...ij", torsion, field_value)
    )


def k_tensor(pi: BivectorField, H: ExprLike, connection: ConnectionSpec, point) -> np.ndarray:
    """K^H(u) = nabla_u X_H + Tor(X_H, u) as an n x n matrix at `point`."""
    X = hamiltonian_vf(pi, H)
    return k_matrix(X.jacobian_at(point), connection.christoffel_at(point), X.at(point))


def wedge3_pi_sharp(pi: BivectorField, phi: ThreeForm, point) -> np.ndarray:
    """(wedge^3 pi_sharp phi)^{ijk} = sum pi^{ia} pi^{jb} pi^{kc} phi_{abc}."""
    P = pi.at(point)
    return np.einsum("...ia,...jb,...kc,...abc->...ijk", P, P, P, phi.at(point))


def exterior_derivative_3form(phi: ThreeForm) -> FourForm:
    """(d phi)_{ijkl} = d_i phi_{jkl} - d_j phi_{ikl} + d_k phi_{ijl} - d_l phi_{ijk}."""
    chart = phi.chart
    entries = {}
    for i, j, k, l in itertools.combinations(range(chart.dimension), 4):
        total = phi.component(j, k, l).diff(i)
        total = sub(total, phi.component(i, k, l).diff(j))
        total = add(total, phi.component(i, j, l).diff(k))
        total = sub(total, phi.component(i, j, k).diff(l))
        entries[(i, j, k, l)] = total
    return FourForm.from_upper(chart, entries)


def derivation_extension(N: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Extension of the (1,1) tensor N by derivation: N(v) on vectors, N P + P N^T on bivectors."""
    N = np.asarray(N, dtype=float)
    P = np.asarray(P, dtype=float)
    if P.ndim == N.ndim - 1:
        return np.einsum("...ij,...j->...i", N, P)
    return N @ P + P @ np.swapaxes(N, -1, -2)


def covariant_derivative_vector(X: VectorField, connection: ConnectionSpec, u, point) -> np.ndarray:
    """(nabla_u X)^i = u^l (d_l X^i + Gamma^i_{lm} X^m)."""
    u = np.asarray(u, dtype=float)
    g = connection.christoffel_at(point)
    return X.jacobian_at(point) @ u + np.einsum("ilm,l,m->i", g, u, X.at(point))


def covariant_derivative_bivector(pi: BivectorField, connection: ConnectionSpec, u, point) -> np.ndarray:
    """(nabla_u P)^{ij} = u^l (d_l P^{ij} + Gamma^i_{lm} P^{mj} + Gamma^j_{lm} P^{im})."""
    u = np.asarray(u, dtype=float)
    g = connection.christoffel_at(point)
    P = pi.at(point)
    return (
        np.einsum("l,lij->ij", u, pi.derivative_at(point))
        + np.einsum("ilm,l,mj->ij", g, u, P)
        + np.einsum("jlm,l,im->ij", g, u, P)
    )


def covariant_rate_vector(christoffel: np.ndarray, velocity: np.ndarray,
                          vector: np.ndarray, vector_rate: np.ndarray) -> np.ndarray:
    """Covariant derivative of a vector along a sampled path: db^k/dt + Gamma^k_{ij} xdot^i b^j."""
    return vector_rate + np.einsum("...kij,...i,...j->...k", christoffel, velocity, vector)


def covariant_rate_covector(christoffel: np.ndarray, velocity: np.ndarray,
                            covector: np.ndarray, covector_rate: np.ndarray) -> np.ndarray:
    """Covariant derivative of a covector along a sampled path: da_k/dt - Gamma^j_{ik} xdot^i a_j."""
    return covector_rate - np.einsum("...jik,...i,...j->...k", christoffel, velocity, covector)


def coordinate_pairs(n: int) -> Iterable[Tuple[int, int]]:
    return itertools.combinations(range(n), 2)
