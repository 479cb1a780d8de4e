"""Immutable expression trees, infix rendering and direct evaluation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Union

from ..errors import DomainError, UnboundSymbolError

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt")
BINARY_OPS = ("+", "-", "*", "/", "^")

# binding strength used by the renderer; mirrors the grammar levels
_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}
_PREC_NEG = 3
_PREC_POW = 4
_PREC_ATOM = 5


class Expr:
    """Base class of every tree node.

    Nodes are frozen dataclasses, so structural equality and hashing come
    for free and trees can be shared between threads.
    """

    __slots__ = ()

    @property
    def children(self) -> tuple[Expr, ...]:
        return ()

    def __str__(self) -> str:
        return render(self)


@dataclass(frozen=True, slots=True)
class Const(Expr):
    value: float

    def __repr__(self) -> str:
        return f"Const({self.value!r})"


@dataclass(frozen=True, slots=True)
class Symbol(Expr):
    name: str

    def __repr__(self) -> str:
        return f"Symbol({self.name!r})"


@dataclass(frozen=True, slots=True)
class Neg(Expr):
    arg: Expr

    @property
    def children(self):
        return (self.arg,)


@dataclass(frozen=True, slots=True)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr

    def __post_init__(self):
        if self.op not in BINARY_OPS:
            raise ValueError(f"unknown binary operator {self.op!r}")

    @property
    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, slots=True)
class Call(Expr):
    func: str
    arg: Expr

    def __post_init__(self):
        if self.func not in FUNCTIONS:
            raise ValueError(f"unknown function {self.func!r}")

    @property
    def children(self):
        return (self.arg,)


Number = Union[int, float]
ExprLike = Union[Expr, Number]


def as_expr(value: ExprLike) -> Expr:
    if isinstance(value, Expr):
        return value
    return Const(float(value))


# Shorthand constructors; they build raw nodes without simplifying.
def Add(a: ExprLike, b: ExprLike) -> Binary:
    return Binary("+", as_expr(a), as_expr(b))


def Sub(a: ExprLike, b: ExprLike) -> Binary:
    return Binary("-", as_expr(a), as_expr(b))


def Mul(a: ExprLike, b: ExprLike) -> Binary:
    return Binary("*", as_expr(a), as_expr(b))


def Div(a: ExprLike, b: ExprLike) -> Binary:
    return Binary("/", as_expr(a), as_expr(b))


def Pow(a: ExprLike, b: ExprLike) -> Binary:
    return Binary("^", as_expr(a), as_expr(b))


ZERO = Const(0.0)
ONE = Const(1.0)


def free_symbols(expr: Expr) -> set[str]:
    out: set[str] = set()
    stack = [expr]
    while stack:
        node = stack.pop()
        if isinstance(node, Symbol):
            out.add(node.name)
        else:
            stack.extend(node.children)
    return out


def depends_on(expr: Expr, name: str) -> bool:
    return name in free_symbols(expr)


def substitute(expr: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace symbols by expressions (no simplification)."""
    if isinstance(expr, Symbol):
        return mapping.get(expr.name, expr)
    if isinstance(expr, Const):
        return expr
    if isinstance(expr, Neg):
        return Neg(substitute(expr.arg, mapping))
    if isinstance(expr, Call):
        return Call(expr.func, substitute(expr.arg, mapping))
    return Binary(expr.op, substitute(expr.left, mapping),
                  substitute(expr.right, mapping))


# ---------------------------------------------------------------- rendering

def _format_number(value: float) -> str:
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def _precedence(node: Expr) -> int:
    if isinstance(node, Binary):
        return _PREC_POW if node.op == "^" else _PREC[node.op]
    if isinstance(node, Neg):
        return _PREC_NEG
    if isinstance(node, Const) and (node.value < 0 or math.copysign(1.0, node.value) < 0):
        # "-2" would re-parse as a unary minus
        return _PREC_NEG
    return _PREC_ATOM


def render(expr: Expr) -> str:
    """Infix text that the parser maps back onto the same tree.

    Parentheses are inserted only where the grammar needs them; a right
    operand at the same level is always wrapped because ``a + (b + c)`` and
    ``a + b + c`` are different trees.
    """
    if isinstance(expr, Const):
        if not math.isfinite(expr.value):
            raise ValueError(f"cannot render non-finite constant {expr.value}")
        text = _format_number(abs(expr.value))
        return "-" + text if math.copysign(1.0, expr.value) < 0 else text
    if isinstance(expr, Symbol):
        return expr.name
    if isinstance(expr, Call):
        return f"{expr.func}({render(expr.arg)})"
    if isinstance(expr, Neg):
        return "-" + _wrap(expr.arg, _precedence(expr.arg) < _PREC_NEG)
    op = expr.op
    if op == "^":
        # base must be an atom; exponent is a factor
        base = _wrap(expr.left, _precedence(expr.left) < _PREC_ATOM)
        exponent = _wrap(expr.right, _precedence(expr.right) < _PREC_NEG)
        return f"{base}^{exponent}"
    prec = _PREC[op]
    lp, rp = _precedence(expr.left), _precedence(expr.right)
    left = _wrap(expr.left, lp < prec)
    right = _wrap(expr.right, rp <= prec)
    return f"{left} {op} {right}"


def _wrap(node: Expr, parens: bool) -> str:
    text = render(node)
    return f"({text})" if parens else text


# --------------------------------------------------------------- evaluation

def _pow(base: float, exponent: float, node: Expr) -> float:
    if base == 0.0 and exponent < 0:
        raise DomainError(f"zero raised to a negative power in {render(node)}", node)
    if base < 0 and not float(exponent).is_integer():
        raise DomainError(f"negative base with fractional exponent in {render(node)}", node)
    try:
        return math.pow(base, exponent)
    except OverflowError:
        return math.copysign(math.inf, base) if float(exponent) % 2 == 1 else math.inf


def _call(func: str, x: float, node: Expr) -> float:
    if func == "log" and x <= 0:
        raise DomainError(f"log of non-positive value {x!r} in {render(node)}", node)
    if func == "sqrt" and x < 0:
        raise DomainError(f"sqrt of negative value {x!r} in {render(node)}", node)
    if func == "exp":
        try:
            return math.exp(x)
        except OverflowError:
            return math.inf
    return getattr(math, func)(x)


def evaluate(expr: Expr, bindings: Mapping[str, float]) -> float:
    """Evaluate ``expr`` in double precision.

    Raises :class:`UnboundSymbolError` for a symbol missing from
    ``bindings`` and :class:`DomainError` naming the offending
    sub-expression when a function leaves its real domain.
    """
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, Symbol):
        try:
            return float(bindings[expr.name])
        except KeyError:
            raise UnboundSymbolError(f"unbound symbol {expr.name!r}") from None
    if isinstance(expr, Neg):
        return -evaluate(expr.arg, bindings)
    if isinstance(expr, Call):
        return _call(expr.func, evaluate(expr.arg, bindings), expr)
    a = evaluate(expr.left, bindings)
    b = evaluate(expr.right, bindings)
    op = expr.op
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if b == 0.0:
            raise DomainError(f"division by zero in {render(expr)}", expr)
        return a / b
    return _pow(a, b, expr)
