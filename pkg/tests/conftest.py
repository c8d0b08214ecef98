"""
Shared fixtures. The modules live flat at the repository root, so the root is
put on sys.path the same way the command-line scripts do it.
"""
import sys
from pathlib import Path

import numpy as np
import pytest

SCRIPT_DIR = Path(__file__).resolve().parent.parent
if str(SCRIPT_DIR) not in sys.path:
    sys.path.insert(0, str(SCRIPT_DIR))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240101)
