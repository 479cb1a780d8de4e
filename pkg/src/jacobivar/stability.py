"""Normal-deviation stability of planar orbits in intrinsic coordinates.

Coordinates are arc length ``s`` along a reference orbit and normal
distance ``z`` from it; ``rho(s)`` is the orbit's radius of curvature.
Along the orbit (z = 0) with energy-preserving deviations the normal
deviation obeys::

    eps_z'' + (3/rho) (sdot^2/rho + (rho/3) d2U/dz2) eps_z = 2 h / rho

and the bracketed factor is the coefficient of stability.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from . import backend
from .errors import DivergenceError, DomainError
from .expr import (Binary, Const, Expr, Symbol, SymbolTable, differentiate,
                   evaluate, free_symbols, parse, simplify, substitute)
from .tape import compile_tape
from .variational import LagrangianSystem

STABLE = "stable"
UNSTABLE = "unstable"
INDETERMINATE = "indeterminate"
ZERO_BAND = 1e-9


@dataclass(frozen=True, eq=False)
class ReferenceOrbit:
    """``rho`` and ``speed`` are expressions in ``s``; ``potential`` in ``z`` and ``s``."""

    rho: Expr
    potential: Expr
    speed: Expr
    domain: tuple[float, float]
    parameters: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        allowed = {"s", "z", *self.parameters}
        for name, expr in (("rho", self.rho), ("potential", self.potential), ("speed", self.speed)):
            extra = free_symbols(expr) - allowed
            if extra:
                raise ValueError(f"{name} uses unknown symbol(s) {sorted(extra)}")
        lo, hi = self.domain
        if not hi > lo:
            raise ValueError("orbit domain must have positive length")
        for s in np.linspace(lo, hi, 17):
            if not self.rho_at(s) > 0:
                raise DomainError(f"radius of curvature must be positive; rho({s:.6g}) = {self.rho_at(s)}")

    @classmethod
    def circular(cls, potential: str, radius: float,
                 parameters: Optional[Mapping[str, float]] = None,
                 radial_symbol: str = "r") -> "ReferenceOrbit":
        """Circular orbit of ``radius`` in the central potential ``U(r)``.

        The orbit speed comes from force balance, ``sdot^2 = r U'(r)``.
        """
        if not radius > 0:
            raise DomainError(f"orbit radius must be positive, got {radius}")
        params = dict(parameters or {})
        U_r = parse(potential)
        b = dict(params, **{radial_symbol: float(radius)})
        dU = evaluate(differentiate(U_r, radial_symbol), b)
        if not dU > 0:
            raise DomainError(f"no circular orbit at r={radius}: U'(r) = {dU} is not attractive")
        speed = math.sqrt(radius * dU)
        U_zs = simplify(substitute(U_r, {radial_symbol: Binary("+", Const(float(radius)), Symbol("z"))}))
        return cls(Const(float(radius)), U_zs, Const(speed),
                   (0.0, 2.0 * math.pi * radius), params)

    def _bind(self, s: float, z: float = 0.0) -> dict:
        return dict(self.parameters, s=float(s), z=float(z))

    def rho_at(self, s: float) -> float:
        return evaluate(self.rho, self._bind(s))

    def speed_at(self, s: float) -> float:
        return evaluate(self.speed, self._bind(s))

    def coefficient_expr(self) -> Expr:
        """Coefficient of stability as an expression in ``s`` (z set to 0)."""
        Uzz = differentiate(differentiate(self.potential, "z"), "z")
        rho, v = self.rho, self.speed
        inner = Binary("+", Binary("/", Binary("^", v, Const(2.0)), rho),
                       Binary("*", Binary("/", rho, Const(3.0)), Uzz))
        coeff = Binary("*", Binary("/", Const(3.0), rho), inner)
        return substitute(coeff, {"z": Const(0.0)})

    def orbital_period(self, samples: int = 2001) -> float:
        """Time to traverse the domain once, by trapezoid on ``1/sdot``."""
        lo, hi = self.domain
        s = np.linspace(lo, hi, samples)
        inv = np.array([1.0 / self.speed_at(x) for x in s])
        return float(np.sum((inv[1:] + inv[:-1]) * np.diff(s)) / 2.0)


@dataclass(frozen=True, eq=False)
class StabilityVerdict:
    s_values: np.ndarray
    coefficients: np.ndarray
    verdict: str
    h: float = 0.0


@dataclass(frozen=True, eq=False)
class NormalDeviation:
    t: np.ndarray
    s: np.ndarray
    eps_z: np.ndarray
    epsdot_z: np.ndarray
    reason: str = "completed"


def stability_coefficient(orbit: ReferenceOrbit, s: float) -> float:
    rho = orbit.rho_at(s)
    if not rho > 0:
        raise DomainError(f"radius of curvature must be positive, got rho({s}) = {rho}")
    b = orbit._bind(s)
    v = orbit.speed_at(s)
    Uzz = evaluate(differentiate(differentiate(orbit.potential, "z"), "z"), b)
    return 3.0 / rho * (v * v / rho + rho / 3.0 * Uzz)


def verdict(orbit: ReferenceOrbit, samples: int = 64, h: float = 0.0) -> StabilityVerdict:
    """Sign test on the coefficient at ``samples`` evenly spaced points.

    Any value below -1e-9 gives "unstable"; otherwise any value within 1e-9
    of zero gives "indeterminate"; otherwise "stable".
    """
    if samples < 2:
        raise ValueError("need at least two samples")
    lo, hi = orbit.domain
    s = np.linspace(lo, hi, samples)
    c = np.array([stability_coefficient(orbit, x) for x in s])
    if np.any(c < -ZERO_BAND):
        result = UNSTABLE
    elif np.any(np.abs(c) <= ZERO_BAND):
        result = INDETERMINATE
    else:
        result = STABLE
    return StabilityVerdict(s, c, result, float(h))


def integrate_normal_deviation(orbit: ReferenceOrbit, h: float, eps_z0: float,
                               epsdot_z0: float = 0.0, t_end: Optional[float] = None,
                               dt: float = 1e-3) -> NormalDeviation:
    """rk4 for ``eps_z'' + coeff(s) eps_z = 2h/rho(s)`` with ``s' = sdot(s)``.

    ``t_end`` defaults to five orbital periods. Stops with reason
    "diverged" once the state is non-finite or its norm passes 1e12.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    t_end = 5.0 * orbit.orbital_period() if t_end is None else t_end
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    params = list(orbit.parameters)
    prog = backend.implementation().TapeProgram(
        compile_tape([orbit.speed, orbit.coefficient_expr(), orbit.rho], ["s", *params]))
    pvals = [float(orbit.parameters[p]) for p in params]

    def rhs(y):
        sp, c, rho = prog([y[0], *pvals])
        return np.array([sp, y[2], 2.0 * h / rho - c * y[1]])

    nsteps = int(math.ceil(t_end / dt - 1e-9))
    step = t_end / nsteps
    y = np.array([orbit.domain[0], eps_z0, epsdot_z0], dtype=float)
    out = np.empty((nsteps + 1, 3))
    out[0] = y
    reason = "completed"
    done = nsteps
    for i in range(nsteps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * step * k1)
        k3 = rhs(y + 0.5 * step * k2)
        k4 = rhs(y + step * k3)
        y = y + step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)) or np.linalg.norm(y[1:]) > 1e12:
            reason = "diverged"
            done = i
            break
        out[i + 1] = y
    out = out[:done + 1]
    t = np.arange(done + 1) * step
    return NormalDeviation(t, out[:, 0], out[:, 1], out[:, 2], reason)


def oscillation_period(t, x) -> float:
    """Mean spacing of upward zero crossings (linear interpolation)."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    idx = np.nonzero((x[:-1] < 0) & (x[1:] >= 0))[0]
    if len(idx) < 2:
        raise DivergenceError("fewer than two upward zero crossings; no oscillation period")
    crossings = t[idx] - x[idx] * (t[idx + 1] - t[idx]) / (x[idx + 1] - x[idx])
    return float(np.mean(np.diff(crossings)))


# ----------------------------------------------------- full intrinsic system

def intrinsic_system(orbit: ReferenceOrbit) -> LagrangianSystem:
    """``L = (dz^2 + ds^2 (1 + z/rho(s))^2)/2 - U(z, s)`` over coordinates (s, z)."""
    stretch = Binary("+", Const(1.0), Binary("/", Symbol("z"), orbit.rho))
    kinetic = Binary("/", Binary("+", Binary("^", Symbol("dz"), Const(2.0)),
                                 Binary("*", Binary("^", Symbol("ds"), Const(2.0)),
                                        Binary("^", stretch, Const(2.0)))), Const(2.0))
    L = Binary("-", kinetic, orbit.potential)
    return LagrangianSystem(SymbolTable(("s", "z"), dict(orbit.parameters)), L)


def intrinsic_h(orbit: ReferenceOrbit, s: float, sdot: float,
                eps_s: float, eps_z: float, epsdot_s: float) -> float:
    """The deviation constant evaluated on the reference orbit (z = zdot = 0)::

        h = sdot epsdot_s + (sdot^2/rho + dU/dz) eps_z + dU/ds eps_s
    """
    b = orbit._bind(s)
    rho = orbit.rho_at(s)
    Uz = evaluate(differentiate(orbit.potential, "z"), b)
    Us = evaluate(differentiate(orbit.potential, "s"), b)
    return sdot * epsdot_s + (sdot * sdot / rho + Uz) * eps_z + Us * eps_s


def intrinsic_gamma(orbit: ReferenceOrbit) -> Expr:
    """Deviation Lagrangian of the intrinsic system written out by hand.

    Independent of :func:`jacobivar.variational.build_gamma`; the two must
    agree everywhere, on and off the orbit.
    """
    z, dz, ds = Symbol("z"), Symbol("dz"), Symbol("ds")
    rho = orbit.rho
    drho = differentiate(rho, "s")
    U = orbit.potential
    e_s, e_z, ed_s, ed_z = Symbol("e_s"), Symbol("e_z"), Symbol("ed_s"), Symbol("ed_z")
    two = Const(2.0)
    stretch2 = Binary("^", Binary("+", Const(1.0), Binary("/", z, rho)), two)
    t1 = Binary("*", dz, ed_z)
    t2 = Binary("*", Binary("*", ds, ed_s), stretch2)
    cz = Binary("-", Binary("*", Binary("/", Binary("^", ds, two), Binary("^", rho, two)),
                            Binary("+", rho, z)),
                differentiate(U, "z"))
    cs = Binary("+", Binary("*", Binary("*", Binary("/", Binary("*", z, Binary("^", ds, two)),
                                                    Binary("^", rho, Const(3.0))),
                                        Binary("+", rho, z)), drho),
                differentiate(U, "s"))
    return Binary("-", Binary("+", Binary("+", t1, t2), Binary("*", cz, e_z)), Binary("*", cs, e_s))


def cartesian_radial_deviation(potential: str, radius: float,
                               parameters: Optional[Mapping[str, float]] = None,
                               eps_r0: float = 1e-3, periods: float = 5.0,
                               dt: float = 1e-3, radial_symbol: str = "r"):
    """Run the general machinery on the same circular orbit in Cartesian form.

    Starts on ``(radius, 0)`` moving in +y with a purely radial deviation
    and ``epsdot`` chosen so the deviation constant is zero. Returns
    ``(t, radial component of eps)``.
    """
    from .dynamics import IntegrationSettings, integrate
    from .state import FlowState
    from .variational import derive, eval_h

    params = dict(parameters or {})
    orbit = ReferenceOrbit.circular(potential, radius, params, radial_symbol)
    v = orbit.speed_at(0.0)
    r_expr = parse("sqrt(x^2 + y^2)")
    U = substitute(parse(potential), {radial_symbol: r_expr})
    L = Binary("-", parse("(dx^2 + dy^2)/2"), U)
    ds = derive(LagrangianSystem(SymbolTable(("x", "y"), params), L))
    # h = dy*ed_y + U'(r) * eps_r at the start; cancel it with ed_y
    probe = FlowState(0.0, [radius, 0.0], [0.0, v], [eps_r0, 0.0], [0.0, 0.0])
    h0 = eval_h(ds, probe)
    initial = FlowState(0.0, [radius, 0.0], [0.0, v], [eps_r0, 0.0], [0.0, -h0 / v])
    res = integrate(ds, initial, IntegrationSettings(t_end=periods * orbit.orbital_period(), dt=dt))
    if not res.completed:
        raise DivergenceError(res.message)
    q = res.q
    r = np.linalg.norm(q, axis=1)
    radial = np.sum(res.eps * q, axis=1) / r
    return res.t, radial
