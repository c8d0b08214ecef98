"""
Expression language for coefficient functions on a coordinate chart.

An expression is an immutable AST of ScalarExpr nodes over the chart
coordinates. Supported: real constants, coordinates, + - * /, integer powers,
unary minus, sin, cos and exp. Everything downstream (bivector components,
Hamiltonians, Christoffel symbols, 3-forms) is a ScalarExpr.

Grammar (no implicit multiplication):

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' ['-'] INTEGER)?
    atom   := NUMBER | NAME | FUNC '(' expr ')' | '(' expr ')'

Precedence is therefore ^ > unary - > * / > + -, so "-x^2" reads -(x^2).
"""
from __future__ import annotations

import logging
import math
import operator
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import DimensionError, EvaluationError, ExprSyntaxError, UnknownIdentifierError

logger = logging.getLogger(__name__)

Number = Union[int, float]

FUNCTIONS = ("sin", "cos", "exp")


class ScalarExpr:
    """Base class of expression nodes. Nodes are frozen dataclasses."""

    def diff(self, coord: int) -> "ScalarExpr":
        raise NotImplementedError

    def to_source(self, names: Sequence[str]) -> str:
        raise NotImplementedError

    def code(self) -> str:
        raise NotImplementedError

    def variables(self) -> frozenset:
        raise NotImplementedError

    def is_zero(self) -> bool:
        return isinstance(self, Const) and self.value == 0.0

    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return sub(self, as_expr(other))

    def __rsub__(self, other):
        return sub(as_expr(other), self)

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent: int):
        if not isinstance(exponent, int):
            raise TypeError("only integer powers are supported")
        return power(self, exponent)


@dataclass(frozen=True)
class Const(ScalarExpr):
    value: float

    def diff(self, coord):
        return ZERO

    def to_source(self, names):
        text = repr(float(self.value))
        return f"({text})" if self.value < 0 else text

    def code(self):
        return f"({float(self.value)!r})"

    def variables(self):
        return frozenset()


@dataclass(frozen=True)
class Var(ScalarExpr):
    index: int

    def diff(self, coord):
        return ONE if coord == self.index else ZERO

    def to_source(self, names):
        return names[self.index]

    def code(self):
        return f"p[{self.index}]"

    def variables(self):
        return frozenset((self.index,))


@dataclass(frozen=True)
class Add(ScalarExpr):
    left: ScalarExpr
    right: ScalarExpr

    def diff(self, coord):
        return add(self.left.diff(coord), self.right.diff(coord))

    def to_source(self, names):
        return _chain(self, (Add, Sub), lambda e: e.to_source(names))

    def code(self):
        return _chain(self, (Add, Sub), lambda e: e.code())

    def variables(self):
        return self.left.variables() | self.right.variables()


@dataclass(frozen=True)
class Sub(ScalarExpr):
    left: ScalarExpr
    right: ScalarExpr

    def diff(self, coord):
        return sub(self.left.diff(coord), self.right.diff(coord))

    def to_source(self, names):
        return _chain(self, (Add, Sub), lambda e: e.to_source(names))

    def code(self):
        return _chain(self, (Add, Sub), lambda e: e.code())

    def variables(self):
        return self.left.variables() | self.right.variables()


@dataclass(frozen=True)
class Mul(ScalarExpr):
    left: ScalarExpr
    right: ScalarExpr

    def diff(self, coord):
        return add(
            mul(self.left.diff(coord), self.right),
            mul(self.left, self.right.diff(coord)),
        )

    def to_source(self, names):
        return _chain(self, (Mul,), lambda e: e.to_source(names))

    def code(self):
        return _chain(self, (Mul,), lambda e: e.code())

    def variables(self):
        return self.left.variables() | self.right.variables()


@dataclass(frozen=True)
class Div(ScalarExpr):
    left: ScalarExpr
    right: ScalarExpr

    def diff(self, coord):
        # (u/v)' = u'/v - u v'/v^2
        return sub(
            div(self.left.diff(coord), self.right),
            div(mul(self.left, self.right.diff(coord)), power(self.right, 2)),
        )

    def to_source(self, names):
        return f"({self.left.to_source(names)} / {self.right.to_source(names)})"

    def code(self):
        return f"_div({self.left.code()}, {self.right.code()})"

    def variables(self):
        return self.left.variables() | self.right.variables()


@dataclass(frozen=True)
class Pow(ScalarExpr):
    base: ScalarExpr
    exponent: int

    def diff(self, coord):
        return mul(
            mul(Const(float(self.exponent)), power(self.base, self.exponent - 1)),
            self.base.diff(coord),
        )

    def to_source(self, names):
        base = self.base.to_source(names)
        if isinstance(self.base, Pow):
            base = f"({base})"
        return f"{base}^{self.exponent}"

    def code(self):
        if self.exponent >= 0:
            return f"(({self.base.code()}) ** {self.exponent})"
        return f"_div(1.0, ({self.base.code()}) ** {-self.exponent})"

    def variables(self):
        return self.base.variables()


@dataclass(frozen=True)
class Neg(ScalarExpr):
    operand: ScalarExpr

    def diff(self, coord):
        return neg(self.operand.diff(coord))

    def to_source(self, names):
        return f"(-{self.operand.to_source(names)})"

    def code(self):
        return f"(-{self.operand.code()})"

    def variables(self):
        return self.operand.variables()


@dataclass(frozen=True)
class Func(ScalarExpr):
    name: str
    arg: ScalarExpr

    def diff(self, coord):
        inner = self.arg.diff(coord)
        if self.name == "sin":
            outer = func("cos", self.arg)
        elif self.name == "cos":
            outer = neg(func("sin", self.arg))
        else:
            outer = self
        return mul(outer, inner)

    def to_source(self, names):
        return f"{self.name}({self.arg.to_source(names)})"

    def code(self):
        return f"_{self.name}({self.arg.code()})"

    def variables(self):
        return self.arg.variables()


ZERO = Const(0.0)
ONE = Const(1.0)

_OPERATORS = {Add: " + ", Sub: " - ", Mul: " * "}


def _chain(e: ScalarExpr, kinds: Tuple[type, ...], render: Callable[[ScalarExpr], str]) -> str:
    # left-nested chains print flat, "(a + b - c)" rather than "((a + b) - c)"
    tail = []
    node = e
    while isinstance(node, kinds):
        tail.append(_OPERATORS[type(node)] + render(node.right))
        node = node.left
    return "(" + render(node) + "".join(reversed(tail)) + ")"


def _fold(op: Callable[..., float], *values: float) -> Const:
    try:
        result = float(op(*values))
    except (OverflowError, ValueError, ZeroDivisionError) as e:
        raise EvaluationError(f"constant out of range ({e})") from e
    if not math.isfinite(result):
        raise EvaluationError(f"constant out of range ({result})")
    return Const(result)


# ---------------------------------------------------------------------------
# Smart constructors (constant folding only)
# ---------------------------------------------------------------------------

def as_expr(value: Union[ScalarExpr, Number]) -> ScalarExpr:
    if isinstance(value, ScalarExpr):
        return value
    if isinstance(value, (int, float, np.floating, np.integer)):
        return Const(float(value))
    raise TypeError(f"cannot convert {type(value).__name__} to ScalarExpr")


def variable(index: int) -> ScalarExpr:
    return Var(index)


def add(a: ScalarExpr, b: ScalarExpr) -> ScalarExpr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold(operator.add, a.value, b.value)
    if a.is_zero():
        return b
    if b.is_zero():
        return a
    return Add(a, b)


def sub(a: ScalarExpr, b: ScalarExpr) -> ScalarExpr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold(operator.sub, a.value, b.value)
    if b.is_zero():
        return a
    if a.is_zero():
        return neg(b)
    return Sub(a, b)


def mul(a: ScalarExpr, b: ScalarExpr) -> ScalarExpr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold(operator.mul, a.value, b.value)
    if a.is_zero() or b.is_zero():
        return ZERO
    if a == ONE:
        return b
    if b == ONE:
        return a
    return Mul(a, b)


def div(a: ScalarExpr, b: ScalarExpr) -> ScalarExpr:
    # 0/x is kept: the pole of x must stay visible at evaluation time
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0.0:
        return _fold(operator.truediv, a.value, b.value)
    if b == ONE:
        return a
    return Div(a, b)


def power(base: ScalarExpr, exponent: int) -> ScalarExpr:
    if exponent == 0:
        return ONE
    if exponent == 1:
        return base
    if isinstance(base, Const) and (base.value != 0.0 or exponent > 0):
        return _fold(operator.pow, float(base.value), exponent)
    return Pow(base, exponent)


def neg(a: ScalarExpr) -> ScalarExpr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.operand
    return Neg(a)


def func(name: str, arg: ScalarExpr) -> ScalarExpr:
    if name not in FUNCTIONS:
        raise ValueError(f"unsupported function {name}")
    if isinstance(arg, Const):
        return _fold(getattr(math, name), arg.value)
    return Func(name, arg)


def differentiate(e: ScalarExpr, coord: int) -> ScalarExpr:
    """Exact partial derivative of e with respect to coordinate `coord`."""
    if coord < 0:
        raise DimensionError(f"coordinate index must be non-negative, got {coord}")
    return e.diff(coord)


def gradient(e: ScalarExpr, dimension: int) -> Tuple[ScalarExpr, ...]:
    return tuple(e.diff(k) for k in range(dimension))


def to_source(e: ScalarExpr, names: Sequence[str]) -> str:
    return e.to_source(names)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
    r")"
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    offset: int


def _byte_offset(src: str, index: int) -> int:
    return len(src[:index].encode("utf-8"))


def _tokenize(src: str) -> List[_Token]:
    tokens: List[_Token] = []
    pos = 0
    while pos < len(src):
        if src[pos:].strip() == "":
            break
        match = _TOKEN_RE.match(src, pos)
        if match is None or match.end() == pos:
            # skip leading blanks to report the offending character itself
            bad = pos + (len(src[pos:]) - len(src[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {src[bad]!r}", _byte_offset(src, bad), src)
        kind = match.lastgroup
        start = match.start(kind)
        tokens.append(_Token(kind, match.group(kind), _byte_offset(src, start)))
        pos = match.end()
    tokens.append(_Token("end", "", _byte_offset(src, len(src))))
    return tokens


class _Parser:
    def __init__(self, src: str, names: Sequence[str]):
        self.src = src
        self.names = {name: i for i, name in enumerate(names)}
        self.tokens = _tokenize(src)
        self.pos = 0

    @property
    def current(self) -> _Token:
        return self.tokens[self.pos]

    def _advance(self) -> _Token:
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def _is_op(self, *ops: str) -> bool:
        return self.current.kind == "op" and self.current.text in ops

    def _expect(self, op: str) -> None:
        if not self._is_op(op):
            raise ExprSyntaxError(f"expected '{op}'", self.current.offset, self.src)
        self._advance()

    def _build(self, token: _Token, constructor: Callable[..., ScalarExpr], *args) -> ScalarExpr:
        try:
            return constructor(*args)
        except EvaluationError as e:
            raise ExprSyntaxError(str(e), token.offset, self.src) from e

    def parse(self) -> ScalarExpr:
        result = self._expr()
        if self.current.kind != "end":
            raise ExprSyntaxError(f"unexpected token {self.current.text!r}", self.current.offset, self.src)
        return result

    def _expr(self) -> ScalarExpr:
        left = self._term()
        while self._is_op("+", "-"):
            token = self._advance()
            right = self._term()
            left = self._build(token, add if token.text == "+" else sub, left, right)
        return left

    def _term(self) -> ScalarExpr:
        left = self._unary()
        while self._is_op("*", "/"):
            token = self._advance()
            right = self._unary()
            left = self._build(token, mul if token.text == "*" else div, left, right)
        return left

    def _unary(self) -> ScalarExpr:
        if self._is_op("-"):
            self._advance()
            return neg(self._unary())
        return self._power()

    def _power(self) -> ScalarExpr:
        base = self._atom()
        if not self._is_op("^"):
            return base
        caret = self._advance()
        sign = 1
        if self._is_op("-"):
            self._advance()
            sign = -1
        token = self.current
        if token.kind != "number" or not token.text.isdigit():
            raise ExprSyntaxError("integer exponent expected", token.offset, self.src)
        self._advance()
        return self._build(caret, power, base, sign * int(token.text))

    def _atom(self) -> ScalarExpr:
        token = self.current
        if token.kind == "number":
            self._advance()
            value = float(token.text)
            if not math.isfinite(value):
                raise ExprSyntaxError(f"number {token.text} is out of range", token.offset, self.src)
            return Const(value)
        if token.kind == "name":
            self._advance()
            if self._is_op("("):
                if token.text not in FUNCTIONS:
                    raise UnknownIdentifierError(token.text, token.offset)
                self._advance()
                arg = self._expr()
                self._expect(")")
                return self._build(token, func, token.text, arg)
            if token.text not in self.names:
                raise UnknownIdentifierError(token.text, token.offset)
            return Var(self.names[token.text])
        if self._is_op("("):
            self._advance()
            inner = self._expr()
            self._expect(")")
            return inner
        raise ExprSyntaxError("expected operand", token.offset, self.src)


def parse(src: str, names: Sequence[str]) -> ScalarExpr:
    """Parse `src` over the coordinate names of a chart."""
    try:
        return _Parser(src, names).parse()
    except RecursionError:
        raise ExprSyntaxError("expression is nested too deeply", 0, src) from None


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _div(a, b):
    if np.any(np.asarray(b) == 0):
        raise EvaluationError("division by zero")
    return a / b


_NAMESPACE = {"_div": _div, "_sin": np.sin, "_cos": np.cos, "_exp": np.exp}


@lru_cache(maxsize=4096)
def compile_exprs(exprs: Tuple[ScalarExpr, ...], dimension: Optional[int] = None) -> Callable[[np.ndarray], np.ndarray]:
    """
    Compile a tuple of expressions into one numpy evaluator.

    The evaluator takes points of shape (n,) or (n, K) and returns an array of
    shape (len(exprs),) or (len(exprs), K). Poles raise EvaluationError. With
    `dimension` set, n must equal it; otherwise n must cover every coordinate used.
    """
    if exprs:
        needed = 1 + max((max(e.variables(), default=-1) for e in exprs), default=-1)
    else:
        needed = 0
    if dimension is not None and needed > dimension:
        raise DimensionError(f"expressions use {needed} coordinates, chart has {dimension}")
    try:
        source = "lambda p: (" + ", ".join(e.code() for e in exprs) + ("," if exprs else "") + ")"
        raw = eval(source, dict(_NAMESPACE))  # generated from the AST only
    except (SyntaxError, RecursionError, MemoryError) as e:
        raise ExprSyntaxError(f"expression too large to compile ({type(e).__name__})", 0) from None

    def evaluator(points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        if dimension is not None and p.shape[0] != dimension:
            raise DimensionError(f"point has dimension {p.shape[0]}, chart has {dimension}")
        if p.shape[0] < needed:
            raise DimensionError(f"point has dimension {p.shape[0]}, expression needs {needed}")
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            values = raw(p)
        out = np.empty((len(values),) + p.shape[1:], dtype=float)
        for k, value in enumerate(values):
            out[k] = value
        if not np.all(np.isfinite(out)):
            raise EvaluationError("non-finite value")
        return out

    return evaluator


def evaluate(e: ScalarExpr, point: Sequence[float], dimension: Optional[int] = None) -> float:
    """IEEE double evaluation of e at a single point."""
    return float(compile_exprs((e,), dimension)(np.asarray(point, dtype=float))[0])
