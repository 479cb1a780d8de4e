"""Symbolic differentiation and a small, sound simplifier."""
from __future__ import annotations

import math
from typing import Iterable, Optional

from ..errors import DomainError, UndeclaredSymbolError
from .tree import (ONE, ZERO, Binary, Call, Const, Expr, Neg, Symbol,
                   depends_on, evaluate)

# ------------------------------------------------------------- simplifier
#
# Rules: constant folding, 0/1 identities and annihilators, numeric
# coefficients gathered across one product chain, like-term collection
# across one sum chain, x^1 -> x. Nothing that needs a domain assumption
# beyond the usual 0*x -> 0.


def _is_const(node: Expr, value: Optional[float] = None) -> bool:
    return isinstance(node, Const) and (value is None or node.value == value)


def _fold(node: Expr) -> Expr:
    try:
        value = evaluate(node, {})
    except DomainError:
        return node
    if not math.isfinite(value):
        return node
    return Const(value)


def _product_parts(node: Expr) -> tuple[float, list[Expr]]:
    """Split a product/quotient-by-number chain into (coefficient, factors)."""
    if isinstance(node, Const):
        return node.value, []
    if isinstance(node, Neg):
        coeff, factors = _product_parts(node.arg)
        return -coeff, factors
    if isinstance(node, Binary) and node.op == "*":
        lc, lf = _product_parts(node.left)
        rc, rf = _product_parts(node.right)
        return lc * rc, _merge_factors(lf + rf)
    if isinstance(node, Binary) and node.op == "/" and _is_const(node.right) \
            and node.right.value != 0.0:
        lc, lf = _product_parts(node.left)
        return lc / node.right.value, lf
    return 1.0, [node]


def _base_exp(factor: Expr) -> tuple[Expr, float]:
    if isinstance(factor, Binary) and factor.op == "^" and _is_const(factor.right):
        return factor.left, factor.right.value
    return factor, 1.0


def _merge_factors(factors: list[Expr]) -> list[Expr]:
    """x * x -> x^2, x^a * x -> x^(a+1) for numeric exponents."""
    order: list[Expr] = []
    exps: dict = {}
    for f in factors:
        base, e = _base_exp(f)
        if base not in exps:
            order.append(base)
            exps[base] = 0.0
        exps[base] += e
    if len(order) == len(factors):
        return factors
    out = []
    for base in order:
        e = exps[base]
        if e == 0.0:
            continue
        out.append(base if e == 1.0 else Binary("^", base, Const(e)))
    return out


def _build_product(coeff: float, factors: list[Expr]) -> Expr:
    if coeff == 0.0 or not factors:
        return Const(coeff)
    mag = abs(coeff)
    recip = 1.0 / mag
    divisor = None
    if mag == 1.0:
        body, rest = factors[0], factors[1:]
    elif mag < 1.0 and recip.is_integer() and recip < 1e15:
        body, rest, divisor = factors[0], factors[1:], recip
    else:
        body, rest = Const(mag), factors
    for f in rest:
        body = Binary("*", body, f)
    if divisor is not None:
        body = Binary("/", body, Const(divisor))
    return Neg(body) if coeff < 0 else body


def _split_term(node: Expr) -> tuple[float, Optional[tuple]]:
    coeff, factors = _product_parts(node)
    return coeff, tuple(factors) if factors else None


def _sum_terms(node: Expr, sign: float, out: list):
    if isinstance(node, Binary) and node.op in "+-":
        _sum_terms(node.left, sign, out)
        _sum_terms(node.right, sign if node.op == "+" else -sign, out)
    elif isinstance(node, Neg):
        _sum_terms(node.arg, -sign, out)
    else:
        coeff, rest = _split_term(node)
        out.append((sign * coeff, rest))


def _collect_sum(node: Expr) -> Expr:
    terms: list = []
    _sum_terms(node, 1.0, terms)
    order: list = []
    totals: dict = {}
    for coeff, rest in terms:
        if rest not in totals:
            order.append(rest)
            totals[rest] = 0.0
        totals[rest] += coeff
    result: Optional[Expr] = None
    # numeric constant goes last
    keys = [k for k in order if k is not None] + ([None] if None in totals else [])
    for key in keys:
        coeff = totals[key]
        if coeff == 0.0:
            continue
        if result is None:
            result = Const(coeff) if key is None else _build_product(coeff, list(key))
        elif coeff < 0:
            mag = Const(-coeff) if key is None else _build_product(-coeff, list(key))
            result = Binary("-", result, mag)
        else:
            mag = Const(coeff) if key is None else _build_product(coeff, list(key))
            result = Binary("+", result, mag)
    return ZERO if result is None else result


def _simplify_mul(left: Expr, right: Expr) -> Expr:
    coeff, factors = _product_parts(Binary("*", left, right))
    return _build_product(coeff, factors)


def _simplify_div(left: Expr, right: Expr) -> Expr:
    if _is_const(right, 1.0):
        return left
    if _is_const(left, 0.0):
        return ZERO
    if isinstance(right, Const) and right.value != 0.0:
        coeff, factors = _product_parts(Binary("/", left, right))
        return _build_product(coeff, factors)
    return Binary("/", left, right)


def _simplify_pow(base: Expr, exponent: Expr) -> Expr:
    if _is_const(exponent, 1.0):
        return base
    if _is_const(exponent, 0.0):
        return ONE
    if _is_const(base, 1.0):
        return ONE
    return Binary("^", base, exponent)


def simplify(expr: Expr) -> Expr:
    """Apply the safe rewrite set bottom-up."""
    if isinstance(expr, (Const, Symbol)):
        return expr
    if isinstance(expr, Neg):
        arg = simplify(expr.arg)
        if isinstance(arg, Const):
            return Const(-arg.value)
        if isinstance(arg, Neg):
            return arg.arg
        if isinstance(arg, Binary) and arg.op == "*":
            return _simplify_mul(Const(-1.0), arg)
        if isinstance(arg, Binary) and arg.op in "+-":
            return _collect_sum(Neg(arg))
        return Neg(arg)
    if isinstance(expr, Call):
        arg = simplify(expr.arg)
        node = Call(expr.func, arg)
        return _fold(node) if isinstance(arg, Const) else node
    left, right = simplify(expr.left), simplify(expr.right)
    node = Binary(expr.op, left, right)
    if isinstance(left, Const) and isinstance(right, Const):
        folded = _fold(node)
        if isinstance(folded, Const):
            return folded
    op = expr.op
    if op in "+-":
        return _collect_sum(node)
    if op == "*":
        return _simplify_mul(left, right)
    if op == "/":
        return _simplify_div(left, right)
    return _simplify_pow(left, right)


# -------------------------------------------------------- differentiation

def _d(expr: Expr, x: str) -> Expr:
    if isinstance(expr, Const):
        return ZERO
    if isinstance(expr, Symbol):
        return ONE if expr.name == x else ZERO
    if not depends_on(expr, x):
        return ZERO
    if isinstance(expr, Neg):
        return Neg(_d(expr.arg, x))
    if isinstance(expr, Call):
        u = expr.arg
        du = _d(u, x)
        f = expr.func
        if f == "sin":
            outer = Call("cos", u)
        elif f == "cos":
            outer = Neg(Call("sin", u))
        elif f == "tan":
            outer = Binary("/", ONE, Binary("^", Call("cos", u), Const(2.0)))
        elif f == "exp":
            outer = expr
        elif f == "log":
            return Binary("/", du, u)
        else:  # sqrt
            return Binary("/", du, Binary("*", Const(2.0), expr))
        return Binary("*", du, outer)

    u, v = expr.left, expr.right
    op = expr.op
    if op in "+-":
        return Binary(op, _d(u, x), _d(v, x))
    if op == "*":
        return Binary("+", Binary("*", _d(u, x), v), Binary("*", u, _d(v, x)))
    if op == "/":
        if not depends_on(v, x):
            return Binary("/", _d(u, x), v)
        return Binary("/",
                      Binary("-", Binary("*", _d(u, x), v), Binary("*", u, _d(v, x))),
                      Binary("^", v, Const(2.0)))
    # power
    if not depends_on(v, x):
        reduced = simplify(Binary("-", v, ONE))
        return Binary("*", Binary("*", v, Binary("^", u, reduced)), _d(u, x))
    if not depends_on(u, x):
        return Binary("*", Binary("*", expr, Call("log", u)), _d(v, x))
    return Binary("*", expr,
                  Binary("+", Binary("*", _d(v, x), Call("log", u)),
                         Binary("/", Binary("*", v, _d(u, x)), u)))


def differentiate(expr: Expr, wrt: str, declared: Optional[Iterable[str]] = None) -> Expr:
    """Exact partial derivative of ``expr`` with respect to symbol ``wrt``.

    When ``declared`` (any container of names, e.g. a SymbolTable) is given,
    ``wrt`` must belong to it.
    """
    if declared is not None and wrt not in declared:
        raise UndeclaredSymbolError(f"cannot differentiate with respect to undeclared symbol {wrt!r}")
    return simplify(_d(expr, wrt))
