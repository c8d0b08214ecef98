"""
Extension of a cotangent path to a bundle morphism over the unit square and
the sigma-model functional evaluated on it.

For a path alpha = (x, a) and the flow phi_y of X_H:
    X(t, y)       = phi_y(x(t))
    beta_y(t, y)  = (T phi_{-y})^* a(t)
    beta_t(t, y)  = d_{X(t, y)} H
The t axis reuses the path grid; the y axis has its own grid of M intervals.
The pullback is integrated as the adjoint of the linearized flow,
lambda' = -J(X)^T lambda, next to the base flow.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict

import numpy as np
from scipy.integrate import simpson

from config import REPORT_SCHEMA
from errors import DimensionError, GridError
from geometry import BivectorField, ExprLike, gradient_field, hamiltonian_vf
from paths import CotangentPath, rk4, time_derivative, time_grid
from variational import QUADRATURE_ORDER, lagrangian

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SquareMorphism:
    """Samples over the (t, y) grid; every array has shape (N+1, M+1, n)."""

    X: np.ndarray
    beta_t: np.ndarray
    beta_y: np.ndarray

    def __post_init__(self):
        shapes = {self.X.shape, self.beta_t.shape, self.beta_y.shape}
        if len(shapes) != 1 or self.X.ndim != 3:
            raise DimensionError(f"square samples must share one (N+1, M+1, n) shape, got {sorted(shapes)}")
        for arr in (self.X, self.beta_t, self.beta_y):
            arr.setflags(write=False)

    @property
    def t_steps(self) -> int:
        return self.X.shape[0] - 1

    @property
    def y_steps(self) -> int:
        return self.X.shape[1] - 1

    @classmethod
    def zero(cls, t_steps: int, y_steps: int, dimension: int) -> "SquareMorphism":
        shape = (t_steps + 1, y_steps + 1, dimension)
        return cls(np.zeros(shape), np.zeros(shape), np.zeros(shape))

    def to_json(self) -> Dict:
        return {
            "schema": REPORT_SCHEMA,
            "kind": "square_morphism",
            "t": time_grid(self.t_steps).tolist(),
            "y": time_grid(self.y_steps).tolist(),
            "X": self.X.tolist(),
            "beta_t": self.beta_t.tolist(),
            "beta_y": self.beta_y.tolist(),
        }


def build_tilde_alpha(pi: BivectorField, H: ExprLike, alpha: CotangentPath, y_steps: int = 512) -> SquareMorphism:
    """Flow every sample of alpha along X_H for y in [0, 1], all t columns at once."""
    chart = pi.chart
    if alpha.dimension != chart.dimension:
        raise DimensionError(f"path has dimension {alpha.dimension}, field has {chart.dimension}")
    X_H = hamiltonian_vf(pi, H)
    logger.info("=" * 80)
    logger.info(f"SIGMA - building square morphism ({alpha.steps + 1} x {y_steps + 1})")
    logger.info("=" * 80)

    def rhs(state: np.ndarray) -> np.ndarray:
        x, lam = state[0], state[1]
        J = X_H.jacobian_at(x)
        return np.stack([X_H.at(x), -np.einsum("kij,ki->kj", J, lam)])

    state0 = np.stack([np.array(alpha.base), np.array(alpha.covector)])
    samples = rk4(
        rhs,
        state0,
        1.0,
        y_steps,
        accept=lambda s: chart.contains(s[0]),
        exit_point=lambda s: s[0][0],
    )
    # samples: (M+1, 2, N+1, n) -> (N+1, M+1, n)
    X = np.transpose(samples[:, 0], (1, 0, 2))
    beta_y = np.transpose(samples[:, 1], (1, 0, 2))
    beta_t = gradient_field(chart, H).at(X.reshape(-1, chart.dimension)).reshape(X.shape)
    return SquareMorphism(X, beta_t, beta_y)


def _integrate_square(values: np.ndarray) -> float:
    t_steps, y_steps = values.shape[0] - 1, values.shape[1] - 1
    if t_steps % 2 or y_steps % 2:
        raise GridError(f"2-D Simpson quadrature needs even grids, got {t_steps} x {y_steps}")
    inner = simpson(values, dx=1.0 / y_steps, axis=1)
    return float(simpson(inner, dx=1.0 / t_steps))


@dataclass
class KSIntegrands:
    first: np.ndarray
    second: np.ndarray
    third: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.first + self.second + self.third


def ks_integrands(pi: BivectorField, s: SquareMorphism) -> KSIntegrands:
    """<beta_t, dX/dy>, -<beta_y, dX/dt> and pi(beta_t, beta_y) on the grid."""
    dX_dt = time_derivative(s.X, QUADRATURE_ORDER)
    dX_dy = np.swapaxes(time_derivative(np.swapaxes(s.X, 0, 1), QUADRATURE_ORDER), 0, 1)
    n = s.X.shape[-1]
    P = pi.at(s.X.reshape(-1, n)).reshape(s.X.shape + (n,))
    first = np.einsum("tyi,tyi->ty", s.beta_t, dX_dy)
    second = -np.einsum("tyi,tyi->ty", s.beta_y, dX_dt)
    third = np.einsum("tyij,tyj,tyi->ty", P, s.beta_t, s.beta_y)
    return KSIntegrands(first, second, third)


def ks_lagrangian(pi: BivectorField, s: SquareMorphism) -> float:
    """Sigma-model functional by 2-D Simpson quadrature."""
    return _integrate_square(ks_integrands(pi, s).total)


@dataclass
class EqualityReport:
    lagrangian: float
    ks_lagrangian: float
    absolute_gap: float
    relative_gap: float
    first_integrand_sup: float
    y_variation_sup: float
    t_steps: int
    y_steps: int
    extra: Dict = field(default_factory=dict)

    def passed(self, tol: float) -> bool:
        return self.absolute_gap <= tol


def verify_equality(pi: BivectorField, H: ExprLike, alpha: CotangentPath, y_steps: int = 512) -> EqualityReport:
    """Compare L^H(alpha) with the sigma-model functional of its extension."""
    left = lagrangian(pi, H, alpha)
    square = build_tilde_alpha(pi, H, alpha, y_steps)
    parts = ks_integrands(pi, square)
    right = _integrate_square(parts.total)
    along_y = parts.second + parts.third
    y_variation = float(np.max(along_y.max(axis=1) - along_y.min(axis=1)))
    gap = abs(left - right)
    scale = max(abs(left), abs(right))
    report = EqualityReport(
        lagrangian=left,
        ks_lagrangian=right,
        absolute_gap=gap,
        relative_gap=gap / scale if scale > 0 else 0.0,
        first_integrand_sup=float(np.max(np.abs(parts.first))),
        y_variation_sup=y_variation,
        t_steps=alpha.steps,
        y_steps=y_steps,
    )
    logger.info(
        f"SIGMA - L^H = {left:.12g}, L^KS = {right:.12g}, gap {gap:.3e}, "
        f"first integrand {report.first_integrand_sup:.3e}, y variation {y_variation:.3e}"
    )
    return report
