"""
Configuration for cotangent-lab.
Values come from the environment (a local .env is honoured) with defaults.
"""
import logging
import os

from dotenv import load_dotenv

# Load environment variables
load_dotenv()


class ConfigError(ValueError):
    """Raised at import time when an environment value is unusable."""


def _int_env(name: str, default: int, minimum: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got {raw!r}")
    if value < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {value}")
    return value


def _float_env(name: str, default: float) -> float:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"{name} must be a number, got {raw!r}")
    if not value > 0:
        raise ConfigError(f"{name} must be positive, got {value}")
    return value


# Worker concurrency for classification sweeps and harness draws.
# 1 keeps everything sequential; results are always merged in input order.
WORKERS = max(1, _int_env("COTANGENT_LAB_THREADS", 1, minimum=0))

# Uniform path grid (number of intervals); Simpson quadrature needs it even.
DEFAULT_GRID = _int_env("COTANGENT_LAB_GRID", 512, minimum=1)
if DEFAULT_GRID % 2:
    raise ConfigError(f"COTANGENT_LAB_GRID must be even, got {DEFAULT_GRID}")

DEFAULT_SEED = _int_env("COTANGENT_LAB_SEED", 20240101, minimum=0)

# Relative singular-value threshold for numerical rank.
RANK_TOL = _float_env("COTANGENT_LAB_RANK_TOL", 1e-9)

# Optional chat webhook for run summaries (--notify).
WEBHOOK_URL = os.getenv("COTANGENT_LAB_WEBHOOK_URL")

LOG_LEVEL = os.getenv("COTANGENT_LAB_LOG_LEVEL", "INFO").upper()
if not isinstance(logging.getLevelName(LOG_LEVEL), int):
    raise ConfigError(f"COTANGENT_LAB_LOG_LEVEL is not a logging level: {LOG_LEVEL!r}")

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

REPORT_SCHEMA = "cotangent-lab/report@1"

# Default tolerances
POISSON_TOL = 1e-10
DEFECT_TOL = 1e-6
QUASI_TOL = 1e-6
