"""Joint integration of the base trajectory and its Jacobi deviation.

The deviation block rides in the same state vector as (q, qdot), so both
see exactly the same step sequence.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import backend
from .errors import DivergenceError, IntegrationSettingsError, SingularMassError
from .linalg import LU
from .state import FlowState
from .variational import (DerivedSystem, assemble_CK, mass_matrix,
                          solve_accelerations)

COMPLETED = "completed"
SINGULAR_MASS = "singular-mass"
DIVERGED = "diverged"

_REASONS = {
    backend.STATUS_SINGULAR: SINGULAR_MASS,
    backend.STATUS_DIVERGED: DIVERGED,
    backend.STATUS_UNDERFLOW: DIVERGED,
}


@dataclass(frozen=True)
class IntegrationSettings:
    """``output_every`` is a time interval; ``None`` means every rk4 step,
    or 1000 evenly spaced samples for rkf45."""

    t_end: float = 10.0
    method: str = "rk4"
    dt: float = 1e-3
    atol: float = 1e-9
    rtol: float = 1e-9
    output_every: Optional[float] = None

    def validate(self, t0: float) -> None:
        if self.method not in ("rk4", "rkf45"):
            raise IntegrationSettingsError(f"unknown method {self.method!r} (rk4 or rkf45)")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise IntegrationSettingsError(f"step must be positive, got dt={self.dt}")
        if not self.t_end > t0:
            raise IntegrationSettingsError(f"t_end={self.t_end} must exceed t0={t0}")
        if self.method == "rkf45" and not (self.atol > 0 and self.rtol >= 0):
            raise IntegrationSettingsError("rkf45 needs atol > 0 and rtol >= 0")
        if self.output_every is not None and not self.output_every > 0:
            raise IntegrationSettingsError("output_every must be positive")


class StateDerivative(NamedTuple):
    qdot: np.ndarray
    qddot: np.ndarray
    epsdot: np.ndarray
    epsddot: np.ndarray


@dataclass(frozen=True, eq=False)
class IntegrationResult:
    n: int
    t: np.ndarray          # (samples,)
    y: np.ndarray          # (samples, 4n) rows of [q, qdot, eps, epsdot]
    H: np.ndarray
    h: Optional[np.ndarray]
    reason: str = COMPLETED
    message: str = ""

    @property
    def completed(self) -> bool:
        return self.reason == COMPLETED

    def state(self, i: int) -> FlowState:
        return FlowState.from_vector(self.t[i], self.y[i], self.n)

    @property
    def final(self) -> FlowState:
        return self.state(-1)

    @property
    def q(self) -> np.ndarray:
        return self.y[:, :self.n]

    @property
    def qdot(self) -> np.ndarray:
        return self.y[:, self.n:2 * self.n]

    @property
    def eps(self) -> np.ndarray:
        return self.y[:, 2 * self.n:3 * self.n]

    @property
    def epsdot(self) -> np.ndarray:
        return self.y[:, 3 * self.n:]

    def __len__(self) -> int:
        return len(self.t)


# ----------------------------------------------------------- right-hand sides

def combined_rhs(ds: DerivedSystem, state: FlowState) -> StateDerivative:
    """``(qdot, qddot, epsdot, epsddot)`` with ``M epsddot = -(C epsdot + K eps)``."""
    accel = solve_accelerations(ds, state)
    C, K = assemble_CK(ds, state, accel)
    lu = LU(mass_matrix(ds, state))
    epsddot = lu.solve(-(C @ state.epsdot + K @ state.eps))
    return StateDerivative(state.qdot.copy(), accel, state.epsdot.copy(), epsddot)


def jacobian_rhs(ds: DerivedSystem, state: FlowState, step: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Deviation rates from a central-difference Jacobian of the base flow.

    Independent of M, C and K: perturbs (q, qdot) along (eps, epsdot) and
    differences the base vector field ``(qdot, qddot)``.
    """
    n = ds.n
    base = np.concatenate([state.q, state.qdot])
    direction = np.concatenate([state.eps, state.epsdot])
    norm = float(np.linalg.norm(direction))
    if norm == 0.0:
        return np.zeros(n), np.zeros(n)
    delta = step * max(1.0, float(np.linalg.norm(base))) / norm
    delta = 2.0 ** round(math.log2(delta))     # x +- delta exact for well-scaled x

    def field(x):
        s = FlowState(state.t, x[:n], x[n:])
        return np.concatenate([x[n:], solve_accelerations(ds, s)])

    diff = (field(base + delta * direction) - field(base - delta * direction)) / (2.0 * delta)
    return diff[:n], diff[n:]


# --------------------------------------------------------------- integration

def _run(ds: DerivedSystem, t0: float, y0, settings: IntegrationSettings, m: int,
         flow=None):
    """Drive a kernel flow; returns (t samples, state samples, status)."""
    settings.validate(t0)
    flow = flow if flow is not None else backend.make_flow(ds, m)
    y = np.array(y0, dtype=float)
    if len(y) != flow.dim:
        raise ValueError(f"initial vector has length {len(y)}, flow expects {flow.dim}")
    ts = [t0]
    ys = [y.copy()]
    span = settings.t_end - t0
    status = backend.STATUS_OK

    if settings.method == "rk4":
        dt = settings.dt
        nfull = int(math.floor(span / dt + 1e-9))
        remainder = span - nfull * dt
        if remainder <= 1e-12 * dt:
            remainder = 0.0
        every = 1 if settings.output_every is None else max(1, int(round(settings.output_every / dt)))
        k = 0
        while k < nfull:
            chunk = min(every, nfull - k)
            status, done = flow.advance_rk4(t0, k, dt, chunk, y)
            k += done
            if done or status == backend.STATUS_OK:
                if done:
                    ts.append(t0 + k * dt)
                    ys.append(y.copy())
            if status != backend.STATUS_OK:
                break
        if status == backend.STATUS_OK and remainder > 0.0:
            status, done = flow.advance_rk4(t0 + nfull * dt, 0, remainder, 1, y)
            if done:
                ts.append(settings.t_end)
                ys.append(y.copy())
    else:
        every = settings.output_every or span / 1000.0
        nout = max(1, int(math.ceil(span / every - 1e-9)))
        h = min(settings.dt, every)
        t = t0
        for i in range(1, nout + 1):
            target = settings.t_end if i == nout else t0 + i * every
            status, t_reached, h = flow.advance_rkf45(t, target, h, settings.atol, settings.rtol, y)
            if t_reached > t:
                ts.append(t_reached)
                ys.append(y.copy())
            t = t_reached
            if status != backend.STATUS_OK:
                break
    return np.array(ts), np.array(ys), status


def _monitor_inputs(ds: DerivedSystem, t: np.ndarray, ys: np.ndarray) -> np.ndarray:
    params = np.array(backend.parameter_values(ds))
    return np.hstack([t[:, None], ys, np.broadcast_to(params, (len(t), len(params)))])


def monitors(ds: DerivedSystem, t: np.ndarray, ys: np.ndarray):
    """H (and h when autonomous) at every row of ``ys`` = [q, qdot, eps, epsdot]."""
    out = backend.make_monitor(ds).batch(_monitor_inputs(ds, np.asarray(t, float), np.asarray(ys, float)))
    H = out[:, 0]
    h = out[:, 1] if ds.h is not None else None
    return H, h


def integrate(ds: DerivedSystem, initial: FlowState,
              settings: Optional[IntegrationSettings] = None) -> IntegrationResult:
    """Integrate the Lagrange and Jacobi equations from ``initial``.

    Stops early, with ``reason`` set, when the mass matrix turns singular or
    the state stops being finite (or its norm passes 1e12).
    """
    settings = settings or IntegrationSettings()
    if initial.n != ds.n:
        raise ValueError(f"initial state has {initial.n} coordinates, system has {ds.n}")
    ts, ys, status = _run(ds, initial.t, initial.as_vector(), settings, m=1)
    H, h = monitors(ds, ts, ys)
    reason = _REASONS.get(status, COMPLETED)
    message = ""
    if reason == SINGULAR_MASS:
        message = (f"mass matrix d2L/dqdot2 became singular near t={ts[-1]:.17g}; "
                   "first-order form requires det(M) != 0")
    elif reason == DIVERGED:
        message = f"state left the finite range (norm > 1e12 or non-finite) after t={ts[-1]:.17g}"
    return IntegrationResult(ds.n, ts, ys, H, h, reason, message)


def drift_report(result: IntegrationResult) -> tuple[float, Optional[float]]:
    """Max |H(t) - H(0)| and, when present, max |h(t) - h(0)|."""
    if not result.completed:
        raise ValueError(f"drift is only reported for completed runs (reason: {result.reason})")
    H_drift = float(np.max(np.abs(result.H - result.H[0])))
    h_drift = None if result.h is None else float(np.max(np.abs(result.h - result.h[0])))
    return H_drift, h_drift


def linearization_error(ds: DerivedSystem, initial: FlowState,
                        settings: Optional[IntegrationSettings] = None,
                        delta: float = 1e-6) -> tuple[float, np.ndarray, np.ndarray]:
    """Compare the integrated deviation with a finite trajectory difference.

    Integrates the base from (q0, qdot0) and from (q0, qdot0) + delta*(eps0,
    epsdot0), then measures ``|(x_pert - x)/delta - (eps, epsdot)|`` relative
    to ``|(eps, epsdot)|`` in phase space. Returns (max relative error, t,
    per-sample relative errors).
    """
    settings = settings or IntegrationSettings()
    n = ds.n
    joint = integrate(ds, initial, settings)
    if not joint.completed:
        error = SingularMassError if joint.reason == SINGULAR_MASS else DivergenceError
        raise error(f"reference run stopped early: {joint.message}")
    x0 = np.concatenate([initial.q, initial.qdot])
    d0 = np.concatenate([initial.eps, initial.epsdot])
    base_flow = backend.make_flow(ds, 0)
    _, base, st1 = _run(ds, initial.t, x0, settings, 0, base_flow)
    _, pert, st2 = _run(ds, initial.t, x0 + delta * d0, settings, 0, base_flow)
    for status in (st1, st2):
        if status == backend.STATUS_SINGULAR:
            raise SingularMassError("finite-difference run hit a singular mass matrix")
        if status != backend.STATUS_OK:
            raise DivergenceError("finite-difference run left the finite range")
    fd = (pert - base) / delta
    dev = joint.y[:, 2 * n:]
    rel = np.linalg.norm(fd - dev, axis=1) / np.linalg.norm(dev, axis=1)
    return float(np.max(rel)), joint.t, rel
