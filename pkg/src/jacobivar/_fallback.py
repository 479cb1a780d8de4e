"""Pure-Python twin of the compiled ``_kernels`` extension.

Same classes, same signatures, same arithmetic order. Used when the
extension is not built or when ``JACOBIVAR_PURE_PYTHON=1`` is set.
"""
from __future__ import annotations

import math

import numpy as np

from .tape import Tape, python_evaluator

OK, SINGULAR, DIVERGED, UNDERFLOW = 0, 1, 2, 3
SINGULAR_RTOL = 1e-12
DIVERGENCE_NORM = 1e12

BACKEND = "python"

_isfinite = math.isfinite


class TapeProgram:
    def __init__(self, tape: Tape):
        self.n_in = tape.n_inputs
        self.n_out = tape.n_outputs
        self.run = python_evaluator(tape)

    def __call__(self, x):
        x = [float(v) for v in x]
        if len(x) != self.n_in:
            raise ValueError(f"expected {self.n_in} inputs, got {len(x)}")
        return np.array(self.run(x), dtype=float)

    def batch(self, X):
        """Evaluate every row of the 2-D input array ``X``."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_in:
            raise ValueError(f"expected rows of {self.n_in} inputs")
        run = self.run
        return np.array([run(row) for row in X.tolist()], dtype=float).reshape(len(X), self.n_out)


class Flow:
    """Base trajectory plus ``m`` deviation vectors as one ODE system."""

    def __init__(self, tape: Tape, n: int, m: int, params):
        self.prog = TapeProgram(tape)
        self.n = n
        self.m = m
        self.dim = 2 * n + 2 * n * m
        self.off_mvt = n
        self.off_M = 2 * n
        self.off_mvq = 2 * n + n * n
        self.off_mqq = 2 * n + 2 * n * n
        self.off_dM = 2 * n + 3 * n * n
        self.off_dmvq = self.off_dM + n * n * (2 * n + 1)
        if self.prog.n_out != self.off_dmvq + n * n * (2 * n + 1):
            raise ValueError("tape does not have the flow output layout")
        params = [float(p) for p in params]
        if self.prog.n_in != 1 + 4 * n + len(params):
            raise ValueError("tape input count does not match n and params")
        self.x = [0.0] * self.prog.n_in
        self.x[1 + 4 * n:] = params

    def _factor(self, M):
        n = self.n
        a = list(M)
        scale = 0.0
        for i in range(n):
            rowsum = 0.0
            for j in range(n):
                v = a[i * n + j]
                if not _isfinite(v):
                    return DIVERGED, None, None
                rowsum = rowsum + abs(v)
            if rowsum > scale:
                scale = rowsum
        piv = list(range(n))
        sign = 1.0
        for k in range(n):
            p = k
            best = abs(a[k * n + k])
            for i in range(k + 1, n):
                if abs(a[i * n + k]) > best:
                    best = abs(a[i * n + k])
                    p = i
            if p != k:
                for j in range(n):
                    a[k * n + j], a[p * n + j] = a[p * n + j], a[k * n + j]
                piv[k], piv[p] = piv[p], piv[k]
                sign = -sign
            if a[k * n + k] == 0.0:
                continue
            for i in range(k + 1, n):
                a[i * n + k] = a[i * n + k] / a[k * n + k]
                for j in range(k + 1, n):
                    a[i * n + j] = a[i * n + j] - a[i * n + k] * a[k * n + j]
        det = sign
        for k in range(n):
            det = det * a[k * n + k]
        if not scale > 0.0:
            return SINGULAR, None, None
        if not abs(det) >= SINGULAR_RTOL * math.pow(scale, n):
            return SINGULAR, None, None
        return OK, a, piv

    def _solve(self, a, piv, b):
        n = self.n
        out = [b[piv[i]] for i in range(n)]
        for i in range(n):
            s = out[i]
            for j in range(i):
                s = s - a[i * n + j] * out[j]
            out[i] = s
        for i in range(n - 1, -1, -1):
            s = out[i]
            for j in range(i + 1, n):
                s = s - a[i * n + j] * out[j]
            out[i] = s / a[i * n + i]
        return out

    def _rhs(self, t, y):
        n = self.n
        x = self.x
        x[0] = t
        x[1:1 + n] = y[:n]
        x[1 + n:1 + 2 * n] = y[n:2 * n]
        o = self.prog.run(x)
        v = y[n:2 * n]
        st, a, piv = self._factor(o[self.off_M:self.off_M + n * n])
        if st != OK:
            return st, None
        off_mvq, off_mvt = self.off_mvq, self.off_mvt
        rhs = []
        for i in range(n):
            s = o[i]
            for j in range(n):
                s = s - o[off_mvq + i * n + j] * v[j]
            rhs.append(s - o[off_mvt + i])
        acc = self._solve(a, piv, rhs)
        dy = list(v) + acc
        if self.m == 0:
            return OK, dy
        nn = 2 * n + 1
        C = [0.0] * (n * n)
        K = [0.0] * (n * n)
        for i in range(n):
            for j in range(n):
                base = self.off_dM + (i * n + j) * nn
                dm = 0.0
                for c in range(n):
                    dm = dm + o[base + c] * v[c]
                for c in range(n):
                    dm = dm + o[base + n + c] * acc[c]
                dm = dm + o[base + 2 * n]
                C[i * n + j] = dm + o[off_mvq + i * n + j] - o[off_mvq + j * n + i]
                base = self.off_dmvq + (i * n + j) * nn
                dm = 0.0
                for c in range(n):
                    dm = dm + o[base + c] * v[c]
                for c in range(n):
                    dm = dm + o[base + n + c] * acc[c]
                dm = dm + o[base + 2 * n]
                K[i * n + j] = dm - o[self.off_mqq + i * n + j]
        for k in range(self.m):
            off = 2 * n + 2 * n * k
            e = y[off:off + n]
            ed = y[off + n:off + 2 * n]
            r = []
            for i in range(n):
                s = 0.0
                for j in range(n):
                    s = s + C[i * n + j] * ed[j] + K[i * n + j] * e[j]
                r.append(-s)
            dy.extend(ed)
            dy.extend(self._solve(a, piv, r))
        return OK, dy

    def _check(self, y):
        s = 0.0
        for v in y:
            if not _isfinite(v):
                return DIVERGED
            s = s + v * v
        if math.sqrt(s) > DIVERGENCE_NORM:
            return DIVERGED
        return OK

    def rhs(self, t, y):
        y = [float(v) for v in y]
        if len(y) != self.dim:
            raise ValueError(f"state must have length {self.dim}")
        st, dy = self._rhs(float(t), y)
        return st, (np.array(dy) if dy is not None else np.full(self.dim, np.nan))

    def advance_rk4(self, t_origin, k0, dt, nsteps, y):
        """Advance ``y`` in place by ``nsteps`` fixed steps; returns (status, steps_done)."""
        if len(y) != self.dim:
            raise ValueError(f"state must have length {self.dim}")
        cur = y.tolist()
        d = self.dim
        h2 = 0.5 * dt
        h6 = dt / 6.0
        rng = range(d)
        for i in range(nsteps):
            t = t_origin + (k0 + i) * dt
            st, k1 = self._rhs(t, cur)
            if st != OK:
                y[:] = cur
                return st, i
            st, k2 = self._rhs(t + h2, [cur[j] + h2 * k1[j] for j in rng])
            if st != OK:
                y[:] = cur
                return st, i
            st, k3 = self._rhs(t + h2, [cur[j] + h2 * k2[j] for j in rng])
            if st != OK:
                y[:] = cur
                return st, i
            st, k4 = self._rhs(t + dt, [cur[j] + dt * k3[j] for j in rng])
            if st != OK:
                y[:] = cur
                return st, i
            new = [cur[j] + h6 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) for j in rng]
            st = self._check(new)
            if st != OK:
                y[:] = cur
                return st, i
            cur = new
        y[:] = cur
        return OK, nsteps

    def advance_rkf45(self, t, t_target, h, atol, rtol, y, max_steps=10_000_000):
        """Adaptive steps up to ``t_target``; returns (status, t_reached, h_next)."""
        if len(y) != self.dim:
            raise ValueError(f"state must have length {self.dim}")
        cur = y.tolist()
        rng = range(self.dim)
        it = 0
        status = OK
        while t < t_target:
            it += 1
            if it > max_steps:
                status = UNDERFLOW
                break
            hh = h
            if hh < 1e-14 * (1.0 + abs(t)):
                status = UNDERFLOW
                break
            clipped = t + hh >= t_target
            if clipped:
                hh = t_target - t
            tt = t
            st, k1 = self._rhs(tt, cur)
            if st != OK:
                status = st
                break
            st, k2 = self._rhs(tt + 0.25 * hh, [cur[j] + hh * (0.25 * k1[j]) for j in rng])
            if st != OK:
                status = st
                break
            st, k3 = self._rhs(tt + (3.0 / 8.0) * hh,
                               [cur[j] + hh * ((3.0 / 32.0) * k1[j] + (9.0 / 32.0) * k2[j]) for j in rng])
            if st != OK:
                status = st
                break
            st, k4 = self._rhs(tt + (12.0 / 13.0) * hh,
                               [cur[j] + hh * ((1932.0 / 2197.0) * k1[j] - (7200.0 / 2197.0) * k2[j]
                                               + (7296.0 / 2197.0) * k3[j]) for j in rng])
            if st != OK:
                status = st
                break
            st, k5 = self._rhs(tt + hh,
                               [cur[j] + hh * ((439.0 / 216.0) * k1[j] - 8.0 * k2[j]
                                               + (3680.0 / 513.0) * k3[j] - (845.0 / 4104.0) * k4[j])
                                for j in rng])
            if st != OK:
                status = st
                break
            st, k6 = self._rhs(tt + 0.5 * hh,
                               [cur[j] + hh * (-(8.0 / 27.0) * k1[j] + 2.0 * k2[j]
                                               - (3544.0 / 2565.0) * k3[j] + (1859.0 / 4104.0) * k4[j]
                                               - (11.0 / 40.0) * k5[j]) for j in rng])
            if st != OK:
                status = st
                break
            err = 0.0
            new = [0.0] * self.dim
            for j in rng:
                new[j] = cur[j] + hh * ((25.0 / 216.0) * k1[j] + (1408.0 / 2565.0) * k3[j]
                                        + (2197.0 / 4104.0) * k4[j] - 0.2 * k5[j])
                e = hh * ((1.0 / 360.0) * k1[j] - (128.0 / 4275.0) * k3[j]
                          - (2197.0 / 75240.0) * k4[j] + (1.0 / 50.0) * k5[j]
                          + (2.0 / 55.0) * k6[j])
                yi = max(abs(cur[j]), abs(new[j]))
                ratio = abs(e) / (atol + rtol * yi)
                if ratio > err:
                    err = ratio
            if not _isfinite(err):
                status = DIVERGED
                break
            if err == 0.0:
                fac = 5.0
            else:
                fac = min(5.0, max(0.2, 0.9 * math.pow(err, -0.2)))
            if err <= 1.0:
                st = self._check(new)
                if st != OK:
                    status = st
                    break
                cur = new
                t = t_target if clipped else tt + hh
                if clipped and fac >= 1.0:
                    continue
            h = hh * fac
        y[:] = cur
        return status, t, h
