"""Lyapunov spectrum from the tangent flow with periodic re-orthonormalisation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import backend
from .dynamics import IntegrationSettings
from .errors import DivergenceError, SingularMassError
from .state import FlowState
from .variational import DerivedSystem


@dataclass(frozen=True, eq=False)
class LyapunovSettings:
    total_time: float = 1000.0
    tau: float = 1.0
    integration: IntegrationSettings = IntegrationSettings()


@dataclass(frozen=True, eq=False)
class LyapunovReport:
    exponents: np.ndarray     # (2n,), descending
    times: np.ndarray         # time of each renormalisation
    running: np.ndarray       # (events, 2n) cumulative estimates
    total_time: float
    tau: float

    @property
    def n_events(self) -> int:
        return len(self.times)


def gram_schmidt(vectors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Modified Gram-Schmidt on the columns of ``vectors``.

    Returns ``(Q, r)`` with orthonormal columns in ``Q`` and the positive
    diagonal ``r`` of the triangular factor.
    """
    Q = np.array(vectors, dtype=float, copy=True)
    k = Q.shape[1]
    r = np.empty(k)
    for j in range(k):
        for i in range(j):
            Q[:, j] -= (Q[:, i] @ Q[:, j]) * Q[:, i]
        r[j] = np.linalg.norm(Q[:, j])
        if r[j] == 0.0:
            raise DivergenceError("tangent vectors became linearly dependent")
        Q[:, j] /= r[j]
    return Q, r


def lyapunov_spectrum(ds: DerivedSystem, initial: FlowState,
                      settings: Optional[LyapunovSettings] = None,
                      backend_name: Optional[str] = None) -> LyapunovReport:
    """All 2n exponents of the linearised flow around the orbit from ``initial``.

    The 2n tangent vectors start as the identity frame in (eps, epsdot) and
    are re-orthonormalised every ``tau``; each exponent is the accumulated
    log stretch divided by elapsed time. The Euclidean norm on (eps, epsdot)
    is used throughout.
    """
    settings = settings or LyapunovSettings()
    integ = settings.integration
    if not settings.total_time > 0 or not settings.tau > 0:
        raise ValueError("total_time and tau must be positive")
    if integ.method not in ("rk4", "rkf45"):
        raise ValueError(f"unknown method {integ.method!r}")
    n = ds.n
    dim = 2 * n
    flow = backend.make_flow(ds, dim, backend_name)
    y = np.empty(flow.dim)
    y[:n] = initial.q
    y[n:dim] = initial.qdot
    frame = np.eye(dim)
    y[dim:] = frame.T.reshape(-1)     # vector k occupies y[dim + dim*k : dim + dim*(k+1)]

    events = max(1, int(round(settings.total_time / settings.tau)))
    tau = settings.total_time / events
    steps_per = max(1, int(round(tau / integ.dt)))
    dt = tau / steps_per
    log_sum = np.zeros(dim)
    times = np.empty(events)
    running = np.empty((events, dim))
    t0 = initial.t
    h = min(integ.dt, tau)
    for e in range(events):
        if integ.method == "rk4":
            status, _ = flow.advance_rk4(t0, e * steps_per, dt, steps_per, y)
        else:
            start = t0 + e * tau
            status, _, h = flow.advance_rkf45(start, start + tau, h, integ.atol, integ.rtol, y)
        if status == backend.STATUS_SINGULAR:
            raise SingularMassError(
                f"mass matrix became singular during the Lyapunov run near t={t0 + e * tau:.6g}")
        if status != backend.STATUS_OK:
            raise DivergenceError(f"base trajectory diverged near t={t0 + e * tau:.6g}")
        tangents = y[dim:].reshape(dim, dim).T
        Q, r = gram_schmidt(tangents)
        y[dim:] = Q.T.reshape(-1)
        log_sum += np.log(r)
        elapsed = (e + 1) * tau
        times[e] = t0 + elapsed
        running[e] = log_sum / elapsed
    exponents = np.sort(running[-1])[::-1].copy()
    return LyapunovReport(exponents, times, running, float(settings.total_time), tau)


def pairing_defect(exponents) -> float:
    """max |lambda_a + lambda_{2n+1-a}| over the sorted spectrum."""
    lam = np.sort(np.asarray(exponents))[::-1]
    return float(np.max(np.abs(lam + lam[::-1])))


def closest_to_zero(exponents) -> float:
    return float(np.min(np.abs(exponents)))
