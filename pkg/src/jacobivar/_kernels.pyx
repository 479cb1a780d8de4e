# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled tape interpreter and flow integrators.

Mirrors ``jacobivar._fallback`` operation for operation; the arithmetic
order is kept identical so both backends agree to rounding.
"""
from libc.math cimport sin, cos, tan, exp, log, sqrt, pow, fabs, isfinite
from libc.stdlib cimport malloc, free

import numpy as np


cdef enum:
    OP_INPUT = 0
    OP_CONST = 1
    OP_ADD = 2
    OP_SUB = 3
    OP_MUL = 4
    OP_DIV = 5
    OP_POW = 6
    OP_NEG = 7
    OP_SQR = 8
    OP_SIN = 9
    OP_COS = 10
    OP_TAN = 11
    OP_EXP = 12
    OP_LOG = 13
    OP_SQRT = 14

cdef enum:
    OK = 0
    SINGULAR = 1
    DIVERGED = 2
    UNDERFLOW = 3

cdef double SINGULAR_RTOL = 1e-12
cdef double DIVERGENCE_NORM = 1e12

BACKEND = "compiled"


cdef class TapeProgram:
    cdef readonly int n_in, n_out
    cdef int n_reg
    cdef int[::1] op, a, b, outputs
    cdef double[::1] consts
    cdef double* reg

    def __cinit__(self, tape):
        self.op = np.ascontiguousarray(tape.op, dtype=np.int32)
        self.a = np.ascontiguousarray(tape.a, dtype=np.int32)
        self.b = np.ascontiguousarray(tape.b, dtype=np.int32)
        self.outputs = np.ascontiguousarray(tape.outputs, dtype=np.int32)
        self.consts = np.ascontiguousarray(tape.consts, dtype=np.float64)
        self.n_reg = self.op.shape[0]
        self.n_out = self.outputs.shape[0]
        self.n_in = tape.n_inputs
        self.reg = <double*> malloc(max(self.n_reg, 1) * sizeof(double))
        if self.reg == NULL:
            raise MemoryError()

    def __dealloc__(self):
        free(self.reg)

    cdef void run(self, const double* x) noexcept nogil:
        cdef int i, o
        cdef double* r = self.reg
        for i in range(self.n_reg):
            o = self.op[i]
            if o == OP_INPUT:
                r[i] = x[self.a[i]]
            elif o == OP_CONST:
                r[i] = self.consts[self.a[i]]
            elif o == OP_ADD:
                r[i] = r[self.a[i]] + r[self.b[i]]
            elif o == OP_SUB:
                r[i] = r[self.a[i]] - r[self.b[i]]
            elif o == OP_MUL:
                r[i] = r[self.a[i]] * r[self.b[i]]
            elif o == OP_DIV:
                r[i] = r[self.a[i]] / r[self.b[i]]
            elif o == OP_POW:
                r[i] = pow(r[self.a[i]], r[self.b[i]])
            elif o == OP_NEG:
                r[i] = -r[self.a[i]]
            elif o == OP_SQR:
                r[i] = r[self.a[i]] * r[self.a[i]]
            elif o == OP_SIN:
                r[i] = sin(r[self.a[i]])
            elif o == OP_COS:
                r[i] = cos(r[self.a[i]])
            elif o == OP_TAN:
                r[i] = tan(r[self.a[i]])
            elif o == OP_EXP:
                r[i] = exp(r[self.a[i]])
            elif o == OP_LOG:
                r[i] = log(r[self.a[i]])
            else:
                r[i] = sqrt(r[self.a[i]])

    cdef inline double out(self, int k) noexcept nogil:
        return self.reg[self.outputs[k]]

    def __call__(self, x):
        cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
        if xv.shape[0] != self.n_in:
            raise ValueError(f"expected {self.n_in} inputs, got {xv.shape[0]}")
        self.run(&xv[0])
        res = np.empty(self.n_out)
        cdef double[::1] rv = res
        cdef int k
        for k in range(self.n_out):
            rv[k] = self.out(k)
        return res

    def batch(self, X):
        """Evaluate every row of the 2-D input array ``X``."""
        cdef double[:, ::1] xv = np.ascontiguousarray(X, dtype=np.float64)
        if xv.shape[1] != self.n_in:
            raise ValueError(f"expected {self.n_in} inputs per row, got {xv.shape[1]}")
        res = np.empty((xv.shape[0], self.n_out))
        cdef double[:, ::1] rv = res
        cdef Py_ssize_t i
        cdef int k
        with nogil:
            for i in range(xv.shape[0]):
                self.run(&xv[i, 0])
                for k in range(self.n_out):
                    rv[i, k] = self.out(k)
        return res


cdef class Flow:
    """Base trajectory plus ``m`` deviation vectors as one ODE system.

    State layout: ``[q, qdot, (eps_k, epsdot_k) for k < m]``.
    """
    cdef TapeProgram prog
    cdef readonly int n, m, dim
    cdef double* x
    cdef double* M
    cdef double* lu
    cdef int* piv
    cdef double* acc
    cdef double* rhsv
    cdef double* C
    cdef double* K
    cdef double* k1
    cdef double* k2
    cdef double* k3
    cdef double* k4
    cdef double* k5
    cdef double* k6
    cdef double* ytmp
    cdef double* ynew
    cdef double* yerr
    cdef int off_mvt, off_M, off_mvq, off_mqq, off_dM, off_dmvq

    def __cinit__(self, tape, int n, int m, params):
        cdef int i
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
        params = list(params)
        if self.prog.n_in != 1 + 4 * n + len(params):
            raise ValueError("tape input count does not match n and params")
        self.x = <double*> malloc(self.prog.n_in * sizeof(double))
        self.M = <double*> malloc(n * n * sizeof(double))
        self.lu = <double*> malloc(n * n * sizeof(double))
        self.piv = <int*> malloc(n * sizeof(int))
        self.acc = <double*> malloc(n * sizeof(double))
        self.rhsv = <double*> malloc(n * sizeof(double))
        self.C = <double*> malloc(n * n * sizeof(double))
        self.K = <double*> malloc(n * n * sizeof(double))
        self.k1 = <double*> malloc(self.dim * sizeof(double))
        self.k2 = <double*> malloc(self.dim * sizeof(double))
        self.k3 = <double*> malloc(self.dim * sizeof(double))
        self.k4 = <double*> malloc(self.dim * sizeof(double))
        self.k5 = <double*> malloc(self.dim * sizeof(double))
        self.k6 = <double*> malloc(self.dim * sizeof(double))
        self.ytmp = <double*> malloc(self.dim * sizeof(double))
        self.ynew = <double*> malloc(self.dim * sizeof(double))
        self.yerr = <double*> malloc(self.dim * sizeof(double))
        if (self.x == NULL or self.M == NULL or self.lu == NULL or self.piv == NULL
                or self.acc == NULL or self.rhsv == NULL or self.C == NULL or self.K == NULL
                or self.k1 == NULL or self.k2 == NULL or self.k3 == NULL or self.k4 == NULL
                or self.k5 == NULL or self.k6 == NULL or self.ytmp == NULL
                or self.ynew == NULL or self.yerr == NULL):
            raise MemoryError()
        for i in range(self.prog.n_in):
            self.x[i] = 0.0
        for i in range(len(params)):
            self.x[1 + 4 * n + i] = float(params[i])

    def __dealloc__(self):
        free(self.x); free(self.M); free(self.lu); free(self.piv)
        free(self.acc); free(self.rhsv); free(self.C); free(self.K)
        free(self.k1); free(self.k2); free(self.k3); free(self.k4)
        free(self.k5); free(self.k6); free(self.ytmp); free(self.ynew); free(self.yerr)

    # -- dense LU with partial pivoting, same loop as jacobivar.linalg
    cdef int _factor(self) noexcept nogil:
        cdef int n = self.n
        cdef int i, j, k, p
        cdef double best, v, sign = 1.0, det, scale = 0.0, rowsum
        cdef double* a = self.lu
        for i in range(n):
            rowsum = 0.0
            for j in range(n):
                v = self.M[i * n + j]
                if not isfinite(v):
                    return DIVERGED
                a[i * n + j] = v
                rowsum = rowsum + fabs(v)
            if rowsum > scale:
                scale = rowsum
            self.piv[i] = i
        for k in range(n):
            p = k
            best = fabs(a[k * n + k])
            for i in range(k + 1, n):
                if fabs(a[i * n + k]) > best:
                    best = fabs(a[i * n + k])
                    p = i
            if p != k:
                for j in range(n):
                    v = a[k * n + j]
                    a[k * n + j] = a[p * n + j]
                    a[p * n + j] = v
                j = self.piv[k]
                self.piv[k] = self.piv[p]
                self.piv[p] = j
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
            return SINGULAR
        if not fabs(det) >= SINGULAR_RTOL * pow(scale, n):
            return SINGULAR
        return OK

    cdef void _solve(self, const double* b, double* out) noexcept nogil:
        cdef int n = self.n
        cdef int i, j
        cdef double s
        cdef double* a = self.lu
        for i in range(n):
            out[i] = b[self.piv[i]]
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

    cdef int _rhs(self, double t, const double* y, double* dy) noexcept nogil:
        cdef int n = self.n
        cdef int a, b, c, k, st, base, nn = 2 * n + 1
        cdef double s, dm
        cdef const double* q = y
        cdef const double* v = y + n
        cdef const double* e
        cdef const double* ed
        self.x[0] = t
        for a in range(n):
            self.x[1 + a] = q[a]
            self.x[1 + n + a] = v[a]
        self.prog.run(self.x)
        for a in range(n * n):
            self.M[a] = self.prog.out(self.off_M + a)
        st = self._factor()
        if st != OK:
            return st
        for a in range(n):
            s = self.prog.out(a)
            for b in range(n):
                s = s - self.prog.out(self.off_mvq + a * n + b) * v[b]
            self.rhsv[a] = s - self.prog.out(self.off_mvt + a)
        self._solve(self.rhsv, self.acc)
        for a in range(n):
            dy[a] = v[a]
            dy[n + a] = self.acc[a]
        if self.m == 0:
            return OK
        for a in range(n):
            for b in range(n):
                base = self.off_dM + (a * n + b) * nn
                dm = 0.0
                for c in range(n):
                    dm = dm + self.prog.out(base + c) * v[c]
                for c in range(n):
                    dm = dm + self.prog.out(base + n + c) * self.acc[c]
                dm = dm + self.prog.out(base + 2 * n)
                self.C[a * n + b] = (dm + self.prog.out(self.off_mvq + a * n + b)
                                     - self.prog.out(self.off_mvq + b * n + a))
                base = self.off_dmvq + (a * n + b) * nn
                dm = 0.0
                for c in range(n):
                    dm = dm + self.prog.out(base + c) * v[c]
                for c in range(n):
                    dm = dm + self.prog.out(base + n + c) * self.acc[c]
                dm = dm + self.prog.out(base + 2 * n)
                self.K[a * n + b] = dm - self.prog.out(self.off_mqq + a * n + b)
        for k in range(self.m):
            e = y + 2 * n + 2 * n * k
            ed = e + n
            for a in range(n):
                s = 0.0
                for b in range(n):
                    s = s + self.C[a * n + b] * ed[b] + self.K[a * n + b] * e[b]
                self.rhsv[a] = -s
            self._solve(self.rhsv, dy + 2 * n + 2 * n * k + n)
            for a in range(n):
                dy[2 * n + 2 * n * k + a] = ed[a]
        return OK

    cdef int _check(self, const double* y) noexcept nogil:
        cdef int i
        cdef double s = 0.0
        for i in range(self.dim):
            if not isfinite(y[i]):
                return DIVERGED
            s = s + y[i] * y[i]
        if sqrt(s) > DIVERGENCE_NORM:
            return DIVERGED
        return OK

    cdef int _rk4(self, double t_origin, long k0, double dt, long nsteps,
                  double* y, long* done) noexcept nogil:
        cdef long i
        cdef int j, st
        cdef int d = self.dim
        cdef double t, h2 = 0.5 * dt, h6 = dt / 6.0
        for i in range(nsteps):
            t = t_origin + (k0 + i) * dt
            st = self._rhs(t, y, self.k1)
            if st != OK:
                done[0] = i
                return st
            for j in range(d):
                self.ytmp[j] = y[j] + h2 * self.k1[j]
            st = self._rhs(t + h2, self.ytmp, self.k2)
            if st != OK:
                done[0] = i
                return st
            for j in range(d):
                self.ytmp[j] = y[j] + h2 * self.k2[j]
            st = self._rhs(t + h2, self.ytmp, self.k3)
            if st != OK:
                done[0] = i
                return st
            for j in range(d):
                self.ytmp[j] = y[j] + dt * self.k3[j]
            st = self._rhs(t + dt, self.ytmp, self.k4)
            if st != OK:
                done[0] = i
                return st
            for j in range(d):
                self.ynew[j] = y[j] + h6 * (self.k1[j] + 2.0 * self.k2[j] + 2.0 * self.k3[j] + self.k4[j])
            st = self._check(self.ynew)
            if st != OK:
                done[0] = i
                return st
            for j in range(d):
                y[j] = self.ynew[j]
        done[0] = nsteps
        return OK

    cdef int _rkf45(self, double* t, double t_target, double* h, double atol,
                    double rtol, double* y, long max_steps) noexcept nogil:
        cdef int j, st
        cdef int d = self.dim
        cdef long it = 0
        cdef double hh, err, sc, yi, fac, tt
        cdef bint clipped
        while t[0] < t_target:
            it += 1
            if it > max_steps:
                return UNDERFLOW
            hh = h[0]
            if hh < 1e-14 * (1.0 + fabs(t[0])):
                return UNDERFLOW
            clipped = t[0] + hh >= t_target
            if clipped:
                hh = t_target - t[0]
            tt = t[0]
            st = self._rhs(tt, y, self.k1)
            if st != OK:
                return st
            for j in range(d):
                self.ytmp[j] = y[j] + hh * (0.25 * self.k1[j])
            st = self._rhs(tt + 0.25 * hh, self.ytmp, self.k2)
            if st != OK:
                return st
            for j in range(d):
                self.ytmp[j] = y[j] + hh * ((3.0 / 32.0) * self.k1[j] + (9.0 / 32.0) * self.k2[j])
            st = self._rhs(tt + (3.0 / 8.0) * hh, self.ytmp, self.k3)
            if st != OK:
                return st
            for j in range(d):
                self.ytmp[j] = y[j] + hh * ((1932.0 / 2197.0) * self.k1[j] - (7200.0 / 2197.0) * self.k2[j]
                                            + (7296.0 / 2197.0) * self.k3[j])
            st = self._rhs(tt + (12.0 / 13.0) * hh, self.ytmp, self.k4)
            if st != OK:
                return st
            for j in range(d):
                self.ytmp[j] = y[j] + hh * ((439.0 / 216.0) * self.k1[j] - 8.0 * self.k2[j]
                                            + (3680.0 / 513.0) * self.k3[j] - (845.0 / 4104.0) * self.k4[j])
            st = self._rhs(tt + hh, self.ytmp, self.k5)
            if st != OK:
                return st
            for j in range(d):
                self.ytmp[j] = y[j] + hh * (-(8.0 / 27.0) * self.k1[j] + 2.0 * self.k2[j]
                                            - (3544.0 / 2565.0) * self.k3[j] + (1859.0 / 4104.0) * self.k4[j]
                                            - (11.0 / 40.0) * self.k5[j])
            st = self._rhs(tt + 0.5 * hh, self.ytmp, self.k6)
            if st != OK:
                return st
            err = 0.0
            for j in range(d):
                self.ynew[j] = y[j] + hh * ((25.0 / 216.0) * self.k1[j] + (1408.0 / 2565.0) * self.k3[j]
                                            + (2197.0 / 4104.0) * self.k4[j] - 0.2 * self.k5[j])
                self.yerr[j] = hh * ((1.0 / 360.0) * self.k1[j] - (128.0 / 4275.0) * self.k3[j]
                                     - (2197.0 / 75240.0) * self.k4[j] + (1.0 / 50.0) * self.k5[j]
                                     + (2.0 / 55.0) * self.k6[j])
                yi = fabs(y[j])
                if fabs(self.ynew[j]) > yi:
                    yi = fabs(self.ynew[j])
                sc = atol + rtol * yi
                if fabs(self.yerr[j]) / sc > err:
                    err = fabs(self.yerr[j]) / sc
            if not isfinite(err):
                return DIVERGED
            if err == 0.0:
                fac = 5.0
            else:
                fac = 0.9 * pow(err, -0.2)
                if fac < 0.2:
                    fac = 0.2
                elif fac > 5.0:
                    fac = 5.0
            if err <= 1.0:
                st = self._check(self.ynew)
                if st != OK:
                    return st
                for j in range(d):
                    y[j] = self.ynew[j]
                t[0] = t_target if clipped else tt + hh
                if clipped and fac >= 1.0:
                    # a step shortened to hit the target says nothing new
                    continue
            h[0] = hh * fac
        return OK

    # -- Python entry points
    def rhs(self, double t, y):
        cdef double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
        if yv.shape[0] != self.dim:
            raise ValueError(f"state must have length {self.dim}")
        out = np.empty(self.dim)
        cdef double[::1] ov = out
        cdef int st = self._rhs(t, &yv[0], &ov[0])
        if st != OK:
            out[:] = np.nan
        return st, out

    def advance_rk4(self, double t_origin, long k0, double dt, long nsteps, double[::1] y):
        """Advance ``y`` in place by ``nsteps`` fixed steps; returns (status, steps_done)."""
        if y.shape[0] != self.dim:
            raise ValueError(f"state must have length {self.dim}")
        cdef long done = 0
        cdef int st
        with nogil:
            st = self._rk4(t_origin, k0, dt, nsteps, &y[0], &done)
        return st, done

    def advance_rkf45(self, double t, double t_target, double h, double atol,
                      double rtol, double[::1] y, long max_steps=10000000):
        """Adaptive steps up to ``t_target``; returns (status, t_reached, h_next)."""
        if y.shape[0] != self.dim:
            raise ValueError(f"state must have length {self.dim}")
        cdef int st
        with nogil:
            st = self._rkf45(&t, t_target, &h, atol, rtol, &y[0], max_steps)
        return st, t, h
