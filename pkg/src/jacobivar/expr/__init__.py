"""Expression DSL: parsing, rendering, differentiation and evaluation."""
from .calculus import differentiate, simplify
from .parser import parse, tokenize
from .symbols import SymbolTable
from .tree import (FUNCTIONS, Add, Binary, Call, Const, Div, Expr, Mul, Neg,
                   Pow, Sub, Symbol, as_expr, depends_on, evaluate,
                   free_symbols, render, substitute)

__all__ = [
    "Add", "Binary", "Call", "Const", "Div", "Expr", "FUNCTIONS", "Mul", "Neg",
    "Pow", "Sub", "Symbol", "SymbolTable", "as_expr", "depends_on",
    "differentiate", "evaluate", "free_symbols", "parse", "render",
    "simplify", "substitute", "tokenize",
]
