"""Equations of motion, Jacobi-equation matrices and conserved quantities.

Everything symbolic is built once by :func:`derive`; the numeric helpers
below evaluate those trees at a :class:`~jacobivar.state.FlowState`. They
are the readable reference path. The integrators run the same algebra
through the compiled tape kernels.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import NotAutonomousError, SingularMassError, UndeclaredSymbolError
from .expr import (Binary, Expr, Symbol, SymbolTable, differentiate, evaluate,
                   free_symbols, parse, render, simplify)
from .linalg import LU
from .state import FlowState

Matrix = tuple[tuple[Expr, ...], ...]


@dataclass(frozen=True)
class LagrangianSystem:
    table: SymbolTable
    lagrangian: Expr

    def __post_init__(self):
        # deviation names must not collide with anything the user declared
        self.table.extended()
        unknown = free_symbols(self.lagrangian) - set(self.table.names())
        if unknown:
            raise UndeclaredSymbolError(
                f"Lagrangian uses undeclared symbol(s): {', '.join(sorted(unknown))}")

    @classmethod
    def from_text(cls, coordinates: Sequence[str], lagrangian: str,
                  parameters: Optional[Mapping[str, float]] = None,
                  time: str = "t") -> "LagrangianSystem":
        table = SymbolTable(tuple(coordinates), dict(parameters or {}), time)
        return cls(table, parse(lagrangian))

    @property
    def n(self) -> int:
        return self.table.n

    @property
    def autonomous(self) -> bool:
        return self.table.time not in free_symbols(self.lagrangian)


@dataclass(frozen=True)
class GammaProbe:
    gamma: Expr
    table: SymbolTable


@dataclass(frozen=True)
class _Partials:
    """d/dq_c, d/dqdot_c and d/dt of one matrix entry."""
    dq: tuple[Expr, ...]
    dv: tuple[Expr, ...]
    dt: Expr


@dataclass(frozen=True, eq=False)
class DerivedSystem:
    system: LagrangianSystem
    table: SymbolTable                  # with deviation symbols
    dL_dq: tuple[Expr, ...]
    dL_dv: tuple[Expr, ...]
    M: Matrix                           # d2L/dqdot_a dqdot_b
    Mvq: Matrix                         # d2L/dqdot_a dq_b
    Mqq: Matrix                         # d2L/dq_a dq_b
    Mvt: tuple[Expr, ...]               # d2L/dqdot_a dt
    M_partials: tuple[tuple[_Partials, ...], ...]
    Mvq_partials: tuple[tuple[_Partials, ...], ...]
    H: Expr
    h: Optional[Expr]
    autonomous: bool
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.system.n

    def bindings(self, state: FlowState) -> dict[str, float]:
        return self.table.bindings(state.t, state.q, state.qdot, state.eps, state.epsdot)


def _partials(expr: Expr, table: SymbolTable) -> _Partials:
    return _Partials(
        tuple(differentiate(expr, c) for c in table.coordinates),
        tuple(differentiate(expr, v) for v in table.velocities),
        differentiate(expr, table.time),
    )


def _symmetric(entry, n: int) -> Matrix:
    upper = {(a, b): entry(a, b) for a in range(n) for b in range(a, n)}
    return tuple(tuple(upper[min(a, b), max(a, b)] for b in range(n)) for a in range(n))


def _sum(terms: Sequence[Expr]) -> Expr:
    out = terms[0]
    for term in terms[1:]:
        out = Binary("+", out, term)
    return out


def derive(system: LagrangianSystem) -> DerivedSystem:
    """Build every symbolic block needed downstream.

    Mixed partials are formed once per unordered pair and mirrored, so the
    velocity and coordinate Hessians are symmetric as trees.
    """
    table = system.table.extended()
    L = system.lagrangian
    qs, vs, t = table.coordinates, table.velocities, table.time
    n = table.n

    dL_dq = tuple(differentiate(L, q) for q in qs)
    dL_dv = tuple(differentiate(L, v) for v in vs)
    M = _symmetric(lambda a, b: differentiate(dL_dv[a], vs[b]), n)
    Mqq = _symmetric(lambda a, b: differentiate(dL_dq[a], qs[b]), n)
    Mvq = tuple(tuple(differentiate(dL_dv[a], qs[b]) for b in range(n)) for a in range(n))
    Mvt = tuple(differentiate(dL_dv[a], t) for a in range(n))
    M_partials = tuple(tuple(_partials(M[a][b], table) for b in range(n)) for a in range(n))
    Mvq_partials = tuple(tuple(_partials(Mvq[a][b], table) for b in range(n)) for a in range(n))

    H = simplify(Binary("-", _sum([Binary("*", dL_dv[b], Symbol(vs[b])) for b in range(n)]), L))
    h = None
    if system.autonomous:
        terms = []
        for b in range(n):
            terms.append(Binary("*", differentiate(H, vs[b]), Symbol(table.deviation_velocities[b])))
            terms.append(Binary("*", differentiate(H, qs[b]), Symbol(table.deviations[b])))
        h = simplify(_sum(terms))

    return DerivedSystem(system, table, dL_dq, dL_dv, M, Mvq, Mqq, Mvt,
                         M_partials, Mvq_partials, H, h, system.autonomous)


def build_gamma(system: LagrangianSystem) -> GammaProbe:
    """The deviation Lagrangian: gradient of L contracted with (eps, epsdot)."""
    table = system.table.extended()
    L = system.lagrangian
    terms = []
    for a in range(table.n):
        terms.append(Binary("*", differentiate(L, table.velocities[a]),
                            Symbol(table.deviation_velocities[a])))
        terms.append(Binary("*", differentiate(L, table.coordinates[a]),
                            Symbol(table.deviations[a])))
    return GammaProbe(simplify(_sum(terms)), table)


# ------------------------------------------------------------ numerics

def _vector(exprs, b) -> np.ndarray:
    return np.array([evaluate(e, b) for e in exprs], dtype=float)


def _matrix(exprs, b) -> np.ndarray:
    return np.array([[evaluate(e, b) for e in row] for row in exprs], dtype=float)


def mass_matrix(ds: DerivedSystem, state: FlowState) -> np.ndarray:
    return _matrix(ds.M, ds.bindings(state))


def _factor_mass(ds: DerivedSystem, state: FlowState, b) -> LU:
    M = _matrix(ds.M, b)
    lu = LU(M)
    if lu.is_singular():
        raise SingularMassError(
            f"velocity Hessian d2L/dqdot2 is singular (det={lu.det:.3e}) at {state!r}; "
            "the equations of motion cannot be put in first-order form "
            "(requires det(M) != 0)", state)
    return lu


def solve_accelerations(ds: DerivedSystem, state: FlowState) -> np.ndarray:
    """qddot from ``M qddot = dL/dq - (d2L/dqdot dq) qdot - d2L/dqdot dt``."""
    b = ds.bindings(state)
    lu = _factor_mass(ds, state, b)
    rhs = _vector(ds.dL_dq, b) - _matrix(ds.Mvq, b) @ state.qdot - _vector(ds.Mvt, b)
    return lu.solve(rhs)


def _total_derivative(part: _Partials, b, qdot, accel) -> float:
    return (sum(evaluate(e, b) * x for e, x in zip(part.dq, qdot))
            + sum(evaluate(e, b) * x for e, x in zip(part.dv, accel))
            + evaluate(part.dt, b))


def assemble_CK(ds: DerivedSystem, state: FlowState, accel) -> tuple[np.ndarray, np.ndarray]:
    """Numeric damping-like and stiffness-like matrices of the Jacobi equation.

    ``C = d/dt M + Mvq - Mvq^T`` and ``K = d/dt Mvq - Mqq`` with each total
    time derivative expanded by the chain rule around ``accel``.
    """
    b = ds.bindings(state)
    n = ds.n
    accel = np.asarray(accel, dtype=float)
    dM = np.array([[_total_derivative(ds.M_partials[i][j], b, state.qdot, accel)
                    for j in range(n)] for i in range(n)])
    dMvq = np.array([[_total_derivative(ds.Mvq_partials[i][j], b, state.qdot, accel)
                      for j in range(n)] for i in range(n)])
    Mvq = _matrix(ds.Mvq, b)
    C = dM + Mvq - Mvq.T
    K = dMvq - _matrix(ds.Mqq, b)
    return C, K


def eval_H(ds: DerivedSystem, state: FlowState) -> float:
    return evaluate(ds.H, ds.bindings(state))


def eval_h(ds: DerivedSystem, state: FlowState) -> float:
    if ds.h is None:
        raise NotAutonomousError(
            f"h is only a constant of motion for autonomous Lagrangians; "
            f"{ds.table.time!r} occurs in L = {render(ds.system.lagrangian)}")
    return evaluate(ds.h, ds.bindings(state))


def time_derivative(expr: Expr, table: SymbolTable, state: FlowState,
                    qddot, epsddot=None) -> float:
    """Total time derivative of ``expr`` along (q, qdot, eps, epsdot, t)."""
    b = table.bindings(state.t, state.q, state.qdot, state.eps, state.epsdot)
    epsddot = np.zeros(table.n) if epsddot is None else epsddot
    rates = {table.time: 1.0}
    rates.update(zip(table.coordinates, state.qdot))
    rates.update(zip(table.velocities, qddot))
    if table.with_deviations:
        rates.update(zip(table.deviations, state.epsdot))
        rates.update(zip(table.deviation_velocities, epsddot))
    present = free_symbols(expr)
    return sum(evaluate(differentiate(expr, name), b) * rate
               for name, rate in rates.items() if name in present)


def gamma_euler_lagrange(probe: GammaProbe, state: FlowState, qddot, epsddot):
    """Euler-Lagrange residuals of the deviation Lagrangian.

    Returns ``(from_eps, from_q)``: varying the deviation gives the
    Lagrange-equation residual of L, varying q gives
    ``M epsddot + C epsdot + K eps``.
    """
    tb = probe.table
    g = probe.gamma
    b = tb.bindings(state.t, state.q, state.qdot, state.eps, state.epsdot)
    from_eps = np.array([
        time_derivative(differentiate(g, tb.deviation_velocities[a]), tb, state, qddot, epsddot)
        - evaluate(differentiate(g, tb.deviations[a]), b) for a in range(tb.n)])
    from_q = np.array([
        time_derivative(differentiate(g, tb.velocities[a]), tb, state, qddot, epsddot)
        - evaluate(differentiate(g, tb.coordinates[a]), b) for a in range(tb.n)])
    return from_eps, from_q


def lagrange_residual(system: LagrangianSystem, state: FlowState, qddot) -> np.ndarray:
    """``d/dt dL/dqdot - dL/dq`` evaluated with the given accelerations."""
    tb = system.table.extended()
    L = system.lagrangian
    b = tb.bindings(state.t, state.q, state.qdot, state.eps, state.epsdot)
    return np.array([
        time_derivative(differentiate(L, tb.velocities[a]), tb, state, qddot)
        - evaluate(differentiate(L, tb.coordinates[a]), b) for a in range(tb.n)])
