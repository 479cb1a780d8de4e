"""Flatten expression trees into a register tape for the numeric kernels.

A tape is a straight-line program: instruction ``i`` writes register ``i``
from an input slot, a constant, or earlier registers. Shared
sub-expressions across all outputs are emitted once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .expr.tree import Binary, Call, Const, Expr, Neg, Symbol

OP_INPUT, OP_CONST = 0, 1
OP_ADD, OP_SUB, OP_MUL, OP_DIV, OP_POW, OP_NEG, OP_SQR = 2, 3, 4, 5, 6, 7, 8
OP_SIN, OP_COS, OP_TAN, OP_EXP, OP_LOG, OP_SQRT = 9, 10, 11, 12, 13, 14

_BINOP = {"+": OP_ADD, "-": OP_SUB, "*": OP_MUL, "/": OP_DIV, "^": OP_POW}
_FUNC = {"sin": OP_SIN, "cos": OP_COS, "tan": OP_TAN, "exp": OP_EXP,
         "log": OP_LOG, "sqrt": OP_SQRT}


@dataclass(frozen=True)
class Tape:
    op: np.ndarray        # int32[n_reg]
    a: np.ndarray         # int32[n_reg]
    b: np.ndarray         # int32[n_reg]
    consts: np.ndarray    # float64
    outputs: np.ndarray   # int32[n_out], register index of each output
    n_inputs: int

    @property
    def n_registers(self) -> int:
        return len(self.op)

    @property
    def n_outputs(self) -> int:
        return len(self.outputs)


def compile_tape(exprs: Sequence[Expr], inputs: Sequence[str]) -> Tape:
    """Compile ``exprs`` over the ordered input slot names ``inputs``."""
    slot = {name: i for i, name in enumerate(inputs)}
    ops: list[int] = []
    aa: list[int] = []
    bb: list[int] = []
    consts: list[float] = []
    const_idx: dict[float, int] = {}
    memo: dict = {}

    def emit(op, a=0, b=0):
        ops.append(op)
        aa.append(a)
        bb.append(b)
        return len(ops) - 1

    def visit(node: Expr) -> int:
        key = node
        if isinstance(node, Const):
            # 0.0 and -0.0 compare equal; keep the sign distinct
            key = ("const", node.value, math.copysign(1.0, node.value))
        reg = memo.get(key)
        if reg is not None:
            return reg
        if isinstance(node, Symbol):
            if node.name not in slot:
                raise KeyError(f"symbol {node.name!r} has no input slot")
            reg = emit(OP_INPUT, slot[node.name])
        elif isinstance(node, Const):
            if key not in const_idx:
                const_idx[key] = len(consts)
                consts.append(node.value)
            reg = emit(OP_CONST, const_idx[key])
        elif isinstance(node, Neg):
            reg = emit(OP_NEG, visit(node.arg))
        elif isinstance(node, Call):
            reg = emit(_FUNC[node.func], visit(node.arg))
        elif isinstance(node, Binary):
            if node.op == "^" and isinstance(node.right, Const) and node.right.value == 2.0:
                reg = emit(OP_SQR, visit(node.left))
            else:
                left = visit(node.left)
                reg = emit(_BINOP[node.op], left, visit(node.right))
        else:
            raise TypeError(f"not an expression node: {node!r}")
        memo[key] = reg
        return reg

    outputs = [visit(e) for e in exprs]
    return Tape(
        op=np.asarray(ops, dtype=np.int32),
        a=np.asarray(aa, dtype=np.int32),
        b=np.asarray(bb, dtype=np.int32),
        consts=np.asarray(consts, dtype=np.float64),
        outputs=np.asarray(outputs, dtype=np.int32),
        n_inputs=len(inputs),
    )


# ------------------------------------------------ pure-Python tape backend

def _safe_div(a, b):
    if b == 0.0:
        if a == 0.0 or a != a:
            return math.nan
        return math.copysign(math.inf, a) * math.copysign(1.0, b)
    return a / b


def _safe_pow(a, b):
    try:
        return math.pow(a, b)
    except ValueError:
        if a == 0.0 and b < 0:
            return math.inf
        return math.nan
    except OverflowError:
        return math.inf


def _safe_log(x):
    if x > 0:
        return math.log(x)
    return -math.inf if x == 0.0 else math.nan


def _safe_sqrt(x):
    return math.sqrt(x) if x >= 0 else math.nan


def _safe_exp(x):
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def _safe_trig(fn):
    def wrapped(x):
        try:
            return fn(x)
        except ValueError:  # infinite argument
            return math.nan
    return wrapped


_SAFE_ENV = {
    "_div": _safe_div, "_pow": _safe_pow, "_log": _safe_log,
    "_sqrt": _safe_sqrt, "_exp": _safe_exp, "_sin": _safe_trig(math.sin),
    "_cos": _safe_trig(math.cos), "_tan": _safe_trig(math.tan),
}
_FAST_ENV = {
    "_div": lambda a, b: a / b, "_pow": math.pow, "_log": math.log,
    "_sqrt": math.sqrt, "_exp": math.exp, "_sin": math.sin,
    "_cos": math.cos, "_tan": math.tan,
}


def _tape_source(tape: Tape, safe: bool = False) -> str:
    lines = ["def run(x, c):"]
    for i, (op, a, b) in enumerate(zip(tape.op.tolist(), tape.a.tolist(), tape.b.tolist())):
        if op == OP_INPUT:
            rhs = f"x[{a}]"
        elif op == OP_CONST:
            rhs = f"c[{a}]"
        elif op == OP_ADD:
            rhs = f"r{a} + r{b}"
        elif op == OP_SUB:
            rhs = f"r{a} - r{b}"
        elif op == OP_MUL:
            rhs = f"r{a} * r{b}"
        elif op == OP_DIV:
            rhs = f"_div(r{a}, r{b})" if safe else f"r{a} / r{b}"
        elif op == OP_POW:
            rhs = f"_pow(r{a}, r{b})"
        elif op == OP_NEG:
            rhs = f"-r{a}"
        elif op == OP_SQR:
            rhs = f"r{a} * r{a}"
        else:
            name = {OP_SIN: "_sin", OP_COS: "_cos", OP_TAN: "_tan", OP_EXP: "_exp",
                    OP_LOG: "_log", OP_SQRT: "_sqrt"}[op]
            rhs = f"{name}(r{a})"
        lines.append(f"    r{i} = {rhs}")
    outs = ", ".join(f"r{k}" for k in tape.outputs.tolist())
    lines.append(f"    return [{outs}]" if outs else "    return []")
    return "\n".join(lines)


def python_evaluator(tape: Tape):
    """Build ``f(x) -> list[float]`` from generated straight-line code.

    The fast variant lets Python raise on domain errors; the rerun through
    the safe variant then yields IEEE results (nan/inf) so both backends
    agree on non-finite values.
    """
    fast_ns = dict(_FAST_ENV)
    safe_ns = dict(_SAFE_ENV)
    exec(compile(_tape_source(tape), "<tape>", "exec"), fast_ns)
    exec(compile(_tape_source(tape, safe=True), "<tape-safe>", "exec"), safe_ns)
    fast, safe = fast_ns["run"], safe_ns["run"]
    consts = tape.consts.tolist()

    def evaluate(x):
        try:
            return fast(x, consts)
        except (ArithmeticError, ValueError):
            return safe(x, consts)

    return evaluate

