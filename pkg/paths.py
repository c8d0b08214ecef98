"""
Sampled paths in the cotangent chart, flows, and the path predicates
(cotangent, tangent integral curve, quasi-cotangent).

All paths live on the uniform grid t_i = i/N, i = 0..N. Samples are stored as
read-only (N+1, n) arrays. Time derivatives come from second-order
np.gradient (one-sided, second-order at the ends) or from a fourth-order
five-point stencil where quadrature accuracy needs it.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from config import DEFECT_TOL, QUASI_TOL, REPORT_SCHEMA
from errors import DimensionError, FlowExitError, GridError
from geometry import (
    BivectorField,
    Chart,
    ConnectionSpec,
    ExprLike,
    VectorField,
    covariant_rate_vector,
    gradient_field,
    hamiltonian_vf,
    k_matrix,
)

logger = logging.getLogger(__name__)

MIN_STEPS = 8

VARIATION_KINDS = ("free", "fixed-endpoints", "initially-cotangent")


def _frozen(samples, name: str) -> np.ndarray:
    arr = np.array(samples, dtype=float)
    if arr.ndim != 2:
        raise DimensionError(f"{name} samples must be a 2-D array (N+1, n), got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def _check_grid(steps: int) -> None:
    if steps < MIN_STEPS:
        raise GridError(f"grid needs at least {MIN_STEPS} intervals, got {steps}")


def time_grid(steps: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, steps + 1)


# ---------------------------------------------------------------------------
# Path types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class _SampledPath:
    base: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "base", _frozen(self.base, "base"))
        _check_grid(self.steps)

    @property
    def steps(self) -> int:
        return self.base.shape[0] - 1

    @property
    def dimension(self) -> int:
        return self.base.shape[1]

    @property
    def h(self) -> float:
        return 1.0 / self.steps

    @property
    def times(self) -> np.ndarray:
        return time_grid(self.steps)

    def check_chart(self, chart: Chart) -> None:
        if self.dimension != chart.dimension:
            raise DimensionError(f"path has dimension {self.dimension}, chart has {chart.dimension}")
        if chart.bounds is not None:
            for i, x in enumerate(self.base):
                if not chart.contains(x):
                    raise GridError(f"base sample {i} lies outside the chart bounds: {list(x)}")


@dataclass(frozen=True, eq=False)
class CotangentPath(_SampledPath):
    """alpha(t) = (x(t), a(t)) with base samples x_i and covector samples a_i."""

    covector: np.ndarray = None

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "covector", _frozen(self.covector, "covector"))
        if self.covector.shape != self.base.shape:
            raise DimensionError(f"covector samples {self.covector.shape} do not match base {self.base.shape}")

    def shifted(self, variation: "PathVariation", eps: float) -> "CotangentPath":
        """alpha + eps (gamma0, delta0) in chart coordinates."""
        return CotangentPath(self.base + eps * variation.vector, self.covector + eps * variation.covector)

    def to_frame(self) -> pd.DataFrame:
        n = self.dimension
        data = {"t": self.times}
        data.update({f"x_{i + 1}": self.base[:, i] for i in range(n)})
        data.update({f"a_{i + 1}": self.covector[:, i] for i in range(n)})
        return pd.DataFrame(data)

    def to_json(self) -> Dict:
        return {
            "schema": REPORT_SCHEMA,
            "kind": "cotangent_path",
            "steps": self.steps,
            "x": encode_floats(self.base),
            "a": encode_floats(self.covector),
        }


@dataclass(frozen=True, eq=False)
class TangentPath(_SampledPath):
    """b(t) over a base path; also carries the defect c(t)."""

    vector: np.ndarray = None

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "vector", _frozen(self.vector, "vector"))
        if self.vector.shape != self.base.shape:
            raise DimensionError(f"vector samples {self.vector.shape} do not match base {self.base.shape}")

    def to_frame(self) -> pd.DataFrame:
        n = self.dimension
        data = {"t": self.times}
        data.update({f"x_{i + 1}": self.base[:, i] for i in range(n)})
        data.update({f"b_{i + 1}": self.vector[:, i] for i in range(n)})
        return pd.DataFrame(data)


@dataclass(frozen=True, eq=False)
class PathVariation:
    """(gamma0, delta0) on the path grid, with its admissibility class."""

    vector: np.ndarray
    covector: np.ndarray
    kind: str = "free"

    def __post_init__(self):
        object.__setattr__(self, "vector", _frozen(self.vector, "vector"))
        object.__setattr__(self, "covector", _frozen(self.covector, "covector"))
        if self.vector.shape != self.covector.shape:
            raise DimensionError("gamma0 and delta0 must share the grid")
        _check_grid(self.vector.shape[0] - 1)
        if self.kind not in VARIATION_KINDS:
            raise ValueError(f"unknown variation class {self.kind!r}; expected one of {VARIATION_KINDS}")
        scale = max(1.0, self.norm())
        if self.kind in ("fixed-endpoints", "initially-cotangent"):
            if np.max(np.abs(self.vector[[0, -1]])) > 1e-12 * scale:
                raise GridError(f"{self.kind} variation must vanish at both endpoints")
        if self.kind == "initially-cotangent":
            if np.max(np.abs(self.covector[0])) > 1e-12 * scale:
                raise GridError("initially-cotangent variation needs delta0(0) = 0")
            start_rate = time_derivative(self.vector, order=2)[0]
            if np.max(np.abs(start_rate)) > 1e-9 * scale:
                raise GridError("initially-cotangent variation needs a zero derivative of gamma0 at t=0")

    @property
    def steps(self) -> int:
        return self.vector.shape[0] - 1

    def norm(self) -> float:
        """Max-abs norm over both components."""
        return float(max(np.max(np.abs(self.vector)), np.max(np.abs(self.covector))))

    @classmethod
    def zero(cls, steps: int, dimension: int, kind: str = "free") -> "PathVariation":
        zeros = np.zeros((steps + 1, dimension))
        return cls(zeros, zeros, kind)


def check_same_grid(*paths) -> int:
    steps = {p.steps for p in paths}
    dims = {p.vector.shape[1] if isinstance(p, PathVariation) else p.dimension for p in paths}
    if len(steps) != 1 or len(dims) != 1:
        raise GridError(f"grid mismatch: steps {sorted(steps)}, dimensions {sorted(dims)}")
    return steps.pop()


# ---------------------------------------------------------------------------
# Discrete derivatives
# ---------------------------------------------------------------------------

def time_derivative(samples: np.ndarray, order: int = 2) -> np.ndarray:
    """d/dt of samples on the unit-interval grid along axis 0 (order 2 or 4)."""
    f = np.asarray(samples, dtype=float)
    steps = f.shape[0] - 1
    h = 1.0 / steps
    if order == 2:
        return np.gradient(f, h, axis=0, edge_order=2)
    if order != 4:
        raise ValueError(f"derivative order must be 2 or 4, got {order}")
    if steps < 4:
        raise GridError("fourth-order derivative needs at least 5 samples")
    d = np.empty_like(f)
    d[2:-2] = (-f[4:] + 8.0 * f[3:-1] - 8.0 * f[1:-3] + f[:-4]) / (12.0 * h)
    d[0] = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / (12.0 * h)
    d[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) / (12.0 * h)
    d[-1] = (25.0 * f[-1] - 48.0 * f[-2] + 36.0 * f[-3] - 16.0 * f[-4] + 3.0 * f[-5]) / (12.0 * h)
    d[-2] = (3.0 * f[-1] + 10.0 * f[-2] - 18.0 * f[-3] + 6.0 * f[-4] - f[-5]) / (12.0 * h)
    return d


# ---------------------------------------------------------------------------
# Flows
# ---------------------------------------------------------------------------

def rk4(rhs: Callable[[np.ndarray], np.ndarray], y0: np.ndarray, T: float, steps: int,
        accept: Optional[Callable[[np.ndarray], bool]] = None,
        exit_point: Callable[[np.ndarray], np.ndarray] = lambda y: y) -> np.ndarray:
    """
    Classical fixed-step RK4 for the autonomous system y' = rhs(y).
    Returns samples of shape (steps+1,) + y0.shape. Raises FlowExitError when
    a sample is non-finite or rejected by `accept`.
    """
    _check_grid(steps)
    dt = T / steps
    y = np.array(y0, dtype=float)
    out = np.empty((steps + 1,) + y.shape)
    out[0] = y
    for i in range(steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * dt * k1)
        k3 = rhs(y + 0.5 * dt * k2)
        k4 = rhs(y + dt * k3)
        y = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)) or (accept is not None and not accept(y)):
            raise FlowExitError(i + 1, exit_point(y))
        out[i + 1] = y
    return out


def flow(X: VectorField, p: Sequence[float], T: float = 1.0, steps: int = 512) -> np.ndarray:
    """Samples of the integral curve of X from p over [0, T], shape (steps+1, n)."""
    chart = X.chart
    start = chart.point(p)
    return rk4(X.at, start, T, steps, accept=chart.contains)


def linearized_flow(X: VectorField, p: Sequence[float], T: float = 1.0,
                    steps: int = 512) -> Tuple[np.ndarray, np.ndarray]:
    """
    Base flow together with its tangent map T phi_t from the augmented system
    x' = X(x), Phi' = J(x) Phi, Phi(0) = I. Returns (base, Phi) with shapes
    (steps+1, n) and (steps+1, n, n).
    """
    chart = X.chart
    n = chart.dimension
    start = chart.point(p)

    def rhs(state: np.ndarray) -> np.ndarray:
        x = state[:, 0]
        phi = state[:, 1:]
        return np.column_stack([X.at(x), X.jacobian_at(x) @ phi])

    state0 = np.column_stack([start, np.eye(n)])
    samples = rk4(rhs, state0, T, steps, accept=lambda s: chart.contains(s[:, 0]),
                  exit_point=lambda s: s[:, 0])
    return samples[:, :, 0], samples[:, :, 1:]


def tangent_integral_curve(X: VectorField, p: Sequence[float], b0: Sequence[float],
                           steps: int = 512) -> TangentPath:
    """b(t) = T phi_t(b0) along the integral curve of X through p."""
    base, phi = linearized_flow(X, p, 1.0, steps)
    return TangentPath(base, vector=phi @ np.asarray(b0, dtype=float))


# ---------------------------------------------------------------------------
# Predicates
# ---------------------------------------------------------------------------

@dataclass
class PathCheck:
    ok: bool
    residual: float
    base_residual: float = 0.0
    series: Optional[np.ndarray] = field(default=None, repr=False)


def _sup(values: np.ndarray) -> float:
    return float(np.max(np.abs(values), initial=0.0))


def cotangent_defect(alpha: CotangentPath, pi: BivectorField, order: int = 2) -> TangentPath:
    """c_i = pi_sharp_{x_i}(a_i) - (dx/dt)_i."""
    if alpha.dimension != pi.chart.dimension:
        raise DimensionError(f"path has dimension {alpha.dimension}, field has {pi.chart.dimension}")
    sharp = np.einsum("kij,kj->ki", pi.at(alpha.base), alpha.covector)
    return TangentPath(alpha.base, vector=sharp - time_derivative(alpha.base, order))


def is_cotangent(alpha: CotangentPath, pi: BivectorField, tol: float = DEFECT_TOL, order: int = 2) -> PathCheck:
    defect = cotangent_defect(alpha, pi, order).vector
    sup = _sup(defect)
    return PathCheck(sup <= tol, sup, series=np.max(np.abs(defect), axis=1))


def base_residual(base: np.ndarray, X: VectorField, order: int = 2) -> np.ndarray:
    """Per-sample max-abs residual of dx/dt - X(x)."""
    return np.max(np.abs(time_derivative(base, order) - X.at(base)), axis=1)


def is_tangent_integral_curve(b: TangentPath, X: VectorField, connection: ConnectionSpec,
                              tol: float = QUASI_TOL, order: int = 2) -> PathCheck:
    """
    Both conditions for b to be T phi_t(b0): the base path is an integral
    curve of X, and nabla_X b = nabla_b X + Tor(X, b) along it.
    """
    base = b.base
    velocity = X.at(base)
    christoffel = connection.christoffel_at(base)
    lhs = covariant_rate_vector(christoffel, velocity, b.vector, time_derivative(b.vector, order))
    K = k_matrix(X.jacobian_at(base), christoffel, velocity)
    rhs = np.einsum("kij,kj->ki", K, b.vector)
    series = np.max(np.abs(lhs - rhs), axis=1)
    base_res = _sup(base_residual(base, X, order))
    residual = _sup(series)
    logger.debug(f"tangent integral curve: base {base_res:.3e}, transport {residual:.3e}")
    return PathCheck(base_res <= tol and residual <= tol, residual, base_res, series)


def quasi_defect(alpha: CotangentPath, pi: BivectorField, H: ExprLike) -> np.ndarray:
    """c = pi_sharp(a - dH) sample-wise; equals pi_sharp(a) - dx/dt once the base follows X_H."""
    dH = gradient_field(pi.chart, H).at(alpha.base)
    return np.einsum("kij,kj->ki", pi.at(alpha.base), alpha.covector - dH)


def is_quasi_cotangent(alpha: CotangentPath, pi: BivectorField, H: ExprLike, connection: ConnectionSpec,
                       tol: float = QUASI_TOL, order: int = 4) -> PathCheck:
    """
    The base path follows X_H, and the defect c solves nabla_{dx/dt} c = K^H(c).
    """
    X = hamiltonian_vf(pi, H)
    c = TangentPath(alpha.base, vector=quasi_defect(alpha, pi, H))
    transport = is_tangent_integral_curve(c, X, connection, tol, order)
    logger.debug(f"quasi-cotangent: base {transport.base_residual:.3e}, defect ODE {transport.residual:.3e}")
    return transport


# ---------------------------------------------------------------------------
# Codecs
# ---------------------------------------------------------------------------

def encode_floats(values) -> Union[str, List]:
    """Nested lists of hex-float strings (exact IEEE round trip)."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        return float(arr).hex()
    return [encode_floats(v) for v in arr]


def decode_floats(values) -> np.ndarray:
    if isinstance(values, str):
        return np.array(float.fromhex(values))
    if isinstance(values, (int, float)):
        return np.array(float(values))
    return np.array([decode_floats(v) for v in values], dtype=float)


def path_from_json(doc: Dict) -> CotangentPath:
    if doc.get("kind") != "cotangent_path":
        raise ValueError(f"not a cotangent path document (kind={doc.get('kind')!r})")
    return CotangentPath(decode_floats(doc["x"]), covector=decode_floats(doc["a"]))


def path_from_frame(frame: pd.DataFrame) -> CotangentPath:
    x_cols = sorted((c for c in frame.columns if c.startswith("x_")), key=lambda c: int(c[2:]))
    a_cols = sorted((c for c in frame.columns if c.startswith("a_")), key=lambda c: int(c[2:]))
    if not x_cols or len(x_cols) != len(a_cols):
        raise DimensionError(f"path CSV needs matching x_i and a_i columns, got {list(frame.columns)}")
    return CotangentPath(frame[x_cols].to_numpy(dtype=float), covector=frame[a_cols].to_numpy(dtype=float))


def save_path(alpha: CotangentPath, path: Union[str, Path]) -> None:
    """Write a path as CSV (.csv) or hex-float JSON (anything else)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix.lower() == ".csv":
        alpha.to_frame().to_csv(path, index=False, float_format="%.17g")
    else:
        path.write_text(json.dumps(alpha.to_json(), indent=2), encoding="utf-8")
    logger.info(f"Path saved to {path}")


def load_path(path: Union[str, Path]) -> CotangentPath:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return path_from_frame(pd.read_csv(path, float_precision="round_trip"))
    return path_from_json(json.loads(path.read_text(encoding="utf-8")))


def write_series_csv(path: Union[str, Path], times: np.ndarray, columns: Dict[str, np.ndarray]) -> None:
    """Residual or defect series for plotting, one row per grid time."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({"t": times, **{name: np.asarray(v, dtype=float) for name, v in columns.items()}})
    frame.to_csv(path, index=False, float_format="%.17g")
    logger.info(f"Series saved to {path}")
