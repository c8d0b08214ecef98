"""
The functional L^H(alpha) = int_0^1 <X_H(x(t)) - dx/dt, a(t)> dt on sampled
cotangent paths, its first variation, and the stationary-point ODE

    dx/dt = X_H(x),    nabla_{dx/dt} a = -(K^H)^* a.

Quadrature is composite Simpson (scipy) on an even grid; time derivatives
inside the functional use the fourth-order stencil so both match in order.
Variations are given in chart components. With a connection the covector part
is first converted to delta_k - Gamma^j_{ik} gamma^i a_j, which makes the
exact differential independent of the connection.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import simpson

from errors import DimensionError, GridError
from geometry import (
    BivectorField,
    ConnectionSpec,
    ExprLike,
    covariant_rate_covector,
    covariant_rate_vector,
    gradient_field,
    hamiltonian_vf,
    k_matrix,
    lie_derivative_pi,
)
from paths import (
    MIN_STEPS,
    CotangentPath,
    PathVariation,
    base_residual,
    check_same_grid,
    quasi_defect,
    rk4,
    time_derivative,
    time_grid,
)

logger = logging.getLogger(__name__)

QUADRATURE_ORDER = 4


def _pairing(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("ki,ki->k", u, v)


def integrate(values: np.ndarray) -> float:
    """Composite Simpson over the unit interval; the grid must be even."""
    steps = len(values) - 1
    if steps % 2:
        raise GridError(f"Simpson quadrature needs an even number of intervals, got {steps}")
    return float(simpson(values, dx=1.0 / steps))


def _connection(pi: BivectorField, connection: Optional[ConnectionSpec]) -> ConnectionSpec:
    return connection if connection is not None else ConnectionSpec.flat(pi.chart)


# ---------------------------------------------------------------------------
# Functional and differentials
# ---------------------------------------------------------------------------

def lagrangian(pi: BivectorField, H: ExprLike, alpha: CotangentPath) -> float:
    """L^H(alpha) by Simpson quadrature."""
    X = hamiltonian_vf(pi, H)
    velocity = time_derivative(alpha.base, QUADRATURE_ORDER)
    return integrate(_pairing(X.at(alpha.base) - velocity, alpha.covector))


def _variation_terms(pi, H, connection, alpha, v):
    check_same_grid(alpha, v)
    if alpha.dimension != pi.chart.dimension:
        raise DimensionError(f"path has dimension {alpha.dimension}, field has {pi.chart.dimension}")
    X = hamiltonian_vf(pi, H)
    x, a = alpha.base, alpha.covector
    gamma = v.vector
    velocity = time_derivative(x, QUADRATURE_ORDER)
    field_value = X.at(x)
    G = connection.christoffel_at(x)
    torsion = G - np.swapaxes(G, -1, -2)
    delta = v.covector - np.einsum("tjik,ti,tj->tk", G, gamma, a)
    nabla_gamma_X = np.einsum("tki,ti->tk", X.jacobian_at(x), gamma) + np.einsum("tkij,ti,tj->tk", G, gamma, field_value)
    tor = np.einsum("tkij,ti,tj->tk", torsion, velocity, gamma)
    return X, x, a, gamma, velocity, field_value, G, delta, nabla_gamma_X, tor


def differential_exact(pi: BivectorField, H: ExprLike, connection: Optional[ConnectionSpec],
                       alpha: CotangentPath, v: PathVariation) -> float:
    """
    d_alpha L^H(gamma0, delta0) =
        int <delta0, X_H - dx/dt> + int <a, nabla_{gamma0} X_H + Tor(dx/dt, gamma0) - nabla_{dx/dt} gamma0>
    """
    connection = _connection(pi, connection)
    X, x, a, gamma, velocity, field_value, G, delta, nabla_gamma_X, tor = _variation_terms(
        pi, H, connection, alpha, v
    )
    nabla_t_gamma = covariant_rate_vector(G, velocity, gamma, time_derivative(gamma, QUADRATURE_ORDER))
    integrand = _pairing(delta, field_value - velocity) + _pairing(a, nabla_gamma_X + tor - nabla_t_gamma)
    return integrate(integrand)


def differential_by_parts(pi: BivectorField, H: ExprLike, connection: Optional[ConnectionSpec],
                          alpha: CotangentPath, v: PathVariation) -> float:
    """
    The integrated-by-parts form
        int <delta0, X_H - dx/dt> + int <a, nabla_{gamma0} X_H + Tor(dx/dt, gamma0)>
        + int <nabla_{dx/dt} a, gamma0> - <a(1), gamma0(1)> + <a(0), gamma0(0)>.
    """
    connection = _connection(pi, connection)
    X, x, a, gamma, velocity, field_value, G, delta, nabla_gamma_X, tor = _variation_terms(
        pi, H, connection, alpha, v
    )
    nabla_t_a = covariant_rate_covector(G, velocity, a, time_derivative(a, QUADRATURE_ORDER))
    integrand = (
        _pairing(delta, field_value - velocity)
        + _pairing(a, nabla_gamma_X + tor)
        + _pairing(nabla_t_a, gamma)
    )
    boundary = float(np.dot(a[0], gamma[0]) - np.dot(a[-1], gamma[-1]))
    return integrate(integrand) + boundary


def differential_fd(pi: BivectorField, H: ExprLike, alpha: CotangentPath, v: PathVariation,
                    eps: float = 1e-5) -> float:
    """Central difference of L^H along alpha + eps (gamma0, delta0)."""
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"finite-difference step must lie in [1e-7, 1e-3], got {eps}")
    check_same_grid(alpha, v)
    plus = lagrangian(pi, H, alpha.shifted(v, eps))
    minus = lagrangian(pi, H, alpha.shifted(v, -eps))
    return (plus - minus) / (2.0 * eps)


@dataclass
class VariationReport:
    exact: float
    finite_difference: float
    absolute_error: float
    relative_error: float
    kind: str
    norm: float


def compare_differentials(pi: BivectorField, H: ExprLike, connection: Optional[ConnectionSpec],
                          alpha: CotangentPath, v: PathVariation, eps: float = 1e-5) -> VariationReport:
    exact = differential_exact(pi, H, connection, alpha, v)
    fd = differential_fd(pi, H, alpha, v, eps)
    absolute = abs(exact - fd)
    scale = max(abs(exact), abs(fd))
    relative = absolute / scale if scale > 0 else 0.0
    return VariationReport(exact, fd, absolute, relative, v.kind, v.norm())


def sample_variation(rng: np.random.Generator, steps: int, dimension: int,
                     kind: str = "free", scale: float = 1.0) -> PathVariation:
    """
    Smooth polynomial variation of the requested class:
      free                 gamma0, delta0 cubic
      fixed-endpoints      gamma0 = t(1-t) q(t), q quadratic
      initially-cotangent  gamma0 = t^2(1-t) q(t), delta0 = t p(t)
    For the last class the second sample is adjusted so the one-sided
    discrete derivative of gamma0 at t=0 is exactly zero.
    """
    t = time_grid(steps)[:, None]

    def poly(degree: int) -> np.ndarray:
        coeffs = rng.uniform(-scale, scale, size=(degree + 1, dimension))
        return sum(c * t ** k for k, c in enumerate(coeffs))

    if kind == "free":
        gamma, delta = poly(3), poly(3)
    elif kind == "fixed-endpoints":
        gamma, delta = t * (1.0 - t) * poly(2), poly(3)
    elif kind == "initially-cotangent":
        gamma, delta = t ** 2 * (1.0 - t) * poly(2), t * poly(2)
        gamma[0] = 0.0
        gamma[1] = gamma[2] / 4.0
        delta[0] = 0.0
    else:
        raise ValueError(f"unknown variation class {kind!r}")
    return PathVariation(gamma, delta, kind)


# ---------------------------------------------------------------------------
# Stationary points
# ---------------------------------------------------------------------------

@dataclass
class StationarySolveConfig:
    """Initial-value data for a stationary path: x(0) = m, a(0) = a_0."""

    initial_point: Sequence[float]
    initial_covector: Sequence[float]
    steps: int = 512
    connection: Optional[ConnectionSpec] = None
    tol: float = 1e-8

    def __post_init__(self):
        self.initial_point = np.asarray(self.initial_point, dtype=float)
        self.initial_covector = np.asarray(self.initial_covector, dtype=float)
        if self.steps < MIN_STEPS:
            raise GridError(f"stationary solve needs at least {MIN_STEPS} steps, got {self.steps}")
        if self.initial_point.shape != self.initial_covector.shape or self.initial_point.ndim != 1:
            raise DimensionError(
                f"initial point {self.initial_point.shape} and covector {self.initial_covector.shape} must match"
            )


def _covector_rate(X, connection, x, a):
    """da/dt from nabla_{dx/dt} a = -(K^H)^* a with dx/dt = X_H(x)."""
    field_value = X.at(x)
    G = connection.christoffel_at(x)
    K = k_matrix(X.jacobian_at(x), G, field_value)
    return np.einsum("...jik,...i,...j->...k", G, field_value, a) - np.einsum("...ik,...i->...k", K, a)


def stationary_solve(pi: BivectorField, H: ExprLike, connection: Optional[ConnectionSpec],
                     cfg: StationarySolveConfig) -> CotangentPath:
    """RK4 on the coupled system (x, a) from (m, a_0) over t in [0, 1]."""
    connection = _connection(pi, connection if connection is not None else cfg.connection)
    chart = pi.chart
    if cfg.initial_point.shape != (chart.dimension,):
        raise DimensionError(f"initial point has dimension {cfg.initial_point.shape[0]}, chart has {chart.dimension}")
    X = hamiltonian_vf(pi, H)
    logger.debug(f"stationary solve from m={cfg.initial_point.tolist()} a0={cfg.initial_covector.tolist()}")

    def rhs(state: np.ndarray) -> np.ndarray:
        x, a = state[0], state[1]
        return np.stack([X.at(x), _covector_rate(X, connection, x, a)])

    samples = rk4(
        rhs,
        np.stack([cfg.initial_point, cfg.initial_covector]),
        1.0,
        cfg.steps,
        accept=lambda s: chart.contains(s[0]),
        exit_point=lambda s: s[0],
    )
    return CotangentPath(samples[:, 0], samples[:, 1])


@dataclass
class StationaryResidual:
    base: float
    covector: float
    series: np.ndarray = field(repr=False)

    @property
    def sup(self) -> float:
        return max(self.base, self.covector)


def stationary_residual(pi: BivectorField, H: ExprLike, connection: Optional[ConnectionSpec],
                        alpha: CotangentPath, order: int = QUADRATURE_ORDER) -> StationaryResidual:
    """Discrete residuals of both stationary equations along alpha."""
    connection = _connection(pi, connection)
    X = hamiltonian_vf(pi, H)
    base = base_residual(alpha.base, X, order)
    rate = time_derivative(alpha.covector, order)
    covector = np.max(np.abs(rate - _covector_rate(X, connection, alpha.base, alpha.covector)), axis=1)
    return StationaryResidual(float(np.max(base)), float(np.max(covector)), np.maximum(base, covector))


def clef_residual(pi: BivectorField, H: ExprLike, connection: Optional[ConnectionSpec],
                  alpha: CotangentPath, order: int = QUADRATURE_ORDER) -> Tuple[float, np.ndarray]:
    """
    Residual series of nabla_{dx/dt} c = K^H(c) + (L_{X_H} pi)_sharp(a - dH)
    for c = pi_sharp(a) - dx/dt along a stationary path. Returns (sup, series).
    """
    connection = _connection(pi, connection)
    X = hamiltonian_vf(pi, H)
    x = alpha.base
    beta = alpha.covector - gradient_field(pi.chart, H).at(x)
    c = quasi_defect(alpha, pi, H)
    velocity = X.at(x)
    G = connection.christoffel_at(x)
    lhs = covariant_rate_vector(G, velocity, c, time_derivative(c, order))
    K = k_matrix(X.jacobian_at(x), G, velocity)
    lie = lie_derivative_pi(pi, X).at(x)
    rhs = np.einsum("kij,kj->ki", K, c) + np.einsum("kij,kj->ki", lie, beta)
    series = np.max(np.abs(lhs - rhs), axis=1)
    return float(np.max(series)), series


def dH_ode_check(pi: BivectorField, H: ExprLike, connection: Optional[ConnectionSpec],
                 m: Sequence[float], steps: int = 512, order: int = QUADRATURE_ORDER) -> float:
    """
    Sup residual of nabla_{dx/dt} dH = -(K^H)^* dH along the X_H flow from m,
    i.e. alpha(t) = d_{x(t)} H solves the stationary covector equation.
    """
    connection = _connection(pi, connection)
    if not connection.torsion_free:
        raise ValueError("dH_ode_check needs a torsion-free connection")
    X = hamiltonian_vf(pi, H)
    chart = pi.chart
    base = rk4(X.at, chart.point(m), 1.0, steps, accept=chart.contains)
    alpha = CotangentPath(base, gradient_field(chart, H).at(base))
    rate = time_derivative(alpha.covector, order)
    residual = rate - _covector_rate(X, connection, base, alpha.covector)
    return float(np.max(np.abs(residual)))
