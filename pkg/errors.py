"""
Exception hierarchy shared by every cotangent-lab module.
The CLI maps these onto exit codes (see cli.py).
"""
from __future__ import annotations

from typing import Optional, Sequence


class CotangentLabError(Exception):
    """Base class for all errors raised by cotangent-lab."""


class ExprSyntaxError(CotangentLabError):
    def __init__(self, message: str, offset: int, source: str = ""):
        self.offset = offset
        self.source = source
        super().__init__(f"{message} at offset {offset}")


class UnknownIdentifierError(CotangentLabError):
    def __init__(self, name: str, offset: int):
        self.name = name
        self.offset = offset
        super().__init__(f"unknown identifier '{name}' at offset {offset}")


class EvaluationError(CotangentLabError):
    """Division by zero or a non-finite value while evaluating an expression."""


class DimensionError(CotangentLabError, ValueError):
    pass


class FlowExitError(CotangentLabError):
    def __init__(self, index: int, point: Optional[Sequence[float]] = None):
        self.index = index
        self.point = None if point is None else [float(v) for v in point]
        super().__init__(f"trajectory left the chart at step {index} (point: {self.point})")


class GridError(CotangentLabError, ValueError):
    pass


class ScenarioError(CotangentLabError):
    def __init__(self, message: str, json_path: str = "$"):
        self.json_path = json_path
        super().__init__(f"{json_path}: {message}")
