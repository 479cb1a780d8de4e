"""Independent reference values.

Nothing here goes through jacobivar's parser, differentiator or kernels.
Symbolic blocks come from sympy on the same Lagrangian text, dynamics
from closed-form solutions, derivatives from central differences.
"""
from __future__ import annotations

import math

import numpy as np
import sympy as sp

_FUNCS = {name: getattr(sp, name) for name in ("sin", "cos", "tan", "exp", "log", "sqrt")}


def sympify(text: str, names):
    syms = {n: sp.Symbol(n) for n in names}
    return sp.sympify(text.replace("^", "**"), locals={**syms, **_FUNCS}), syms


class SympySystem:
    """Lagrangian mechanics done by sympy, for cross-checking ``derive``."""

    def __init__(self, coords, velocities, text, params=None, time="t"):
        self.coords = list(coords)
        self.vels = list(velocities)
        self.params = dict(params or {})
        names = self.coords + self.vels + [time] + list(self.params)
        L, syms = sympify(text, names)
        self.L = L.subs({syms[k]: v for k, v in self.params.items()})
        self.q = [syms[c] for c in self.coords]
        self.v = [syms[c] for c in self.vels]
        self.t = syms[time]
        n = len(self.q)
        self.n = n
        self.dLdq = [sp.diff(self.L, x) for x in self.q]
        self.dLdv = [sp.diff(self.L, x) for x in self.v]
        self.M = sp.Matrix(n, n, lambda a, b: sp.diff(self.L, self.v[a], self.v[b]))
        self.Mvq = sp.Matrix(n, n, lambda a, b: sp.diff(self.L, self.v[a], self.q[b]))
        self.Mqq = sp.Matrix(n, n, lambda a, b: sp.diff(self.L, self.q[a], self.q[b]))
        self.Mvt = sp.Matrix(n, 1, lambda a, _: sp.diff(self.L, self.v[a], self.t))
        self.H = sum(d * x for d, x in zip(self.dLdv, self.v)) - self.L
        args = [self.t, *self.q, *self.v]
        acc = sp.symbols(f"acc0:{n}")
        self._acc = acc
        self._f = {
            "L": sp.lambdify(args, self.L, "math"),
            "H": sp.lambdify(args, self.H, "math"),
            "dHdq": sp.lambdify(args, [sp.diff(self.H, x) for x in self.q], "math"),
            "dHdv": sp.lambdify(args, [sp.diff(self.H, x) for x in self.v], "math"),
            "dLdq": sp.lambdify(args, self.dLdq, "math"),
            "M": sp.lambdify(args, self.M, "numpy"),
            "Mvq": sp.lambdify(args, self.Mvq, "numpy"),
            "Mqq": sp.lambdify(args, self.Mqq, "numpy"),
            "Mvt": sp.lambdify(args, self.Mvt, "numpy"),
        }
        # total time derivatives with the accelerations as extra symbols
        def ddt(F):
            return (sum(sp.diff(F, x) * xd for x, xd in zip(self.q, self.v))
                    + sum(sp.diff(F, x) * a for x, a in zip(self.v, acc)) + sp.diff(F, self.t))
        self._f["dM"] = sp.lambdify(args + list(acc), self.M.applyfunc(ddt), "numpy")
        self._f["dMvq"] = sp.lambdify(args + list(acc), self.Mvq.applyfunc(ddt), "numpy")

    def _args(self, t, q, v):
        return [float(t), *map(float, q), *map(float, v)]

    def matrix(self, name, t, q, v, *extra):
        return np.array(self._f[name](*self._args(t, q, v), *extra), dtype=float)

    def accelerations(self, t, q, v):
        M = self.matrix("M", t, q, v)
        rhs = (np.array(self._f["dLdq"](*self._args(t, q, v)), dtype=float)
               - self.matrix("Mvq", t, q, v) @ np.asarray(v, float)
               - self.matrix("Mvt", t, q, v).ravel())
        return np.linalg.solve(M, rhs)

    def CK(self, t, q, v):
        acc = self.accelerations(t, q, v)
        dM = self.matrix("dM", t, q, v, *acc)
        dMvq = self.matrix("dMvq", t, q, v, *acc)
        Mvq = self.matrix("Mvq", t, q, v)
        return dM + Mvq - Mvq.T, dMvq - self.matrix("Mqq", t, q, v)

    def epsddot(self, t, q, v, e, ed):
        C, K = self.CK(t, q, v)
        return np.linalg.solve(self.matrix("M", t, q, v), -(C @ ed + K @ e))

    def H_value(self, t, q, v):
        return self._f["H"](*self._args(t, q, v))

    def h_value(self, t, q, v, e, ed):
        a = self._args(t, q, v)
        return float(np.dot(self._f["dHdv"](*a), ed) + np.dot(self._f["dHdq"](*a), e))


def central_difference(f, x: float, h: float) -> float:
    return (f(x + h) - f(x - h)) / (2.0 * h)


# ----------------------------------------------------------- closed forms

def oscillator(t, q0, v0, w):
    """q(t), qdot(t) for qddot = -w^2 q."""
    t = np.asarray(t, float)
    return (q0 * np.cos(w * t) + v0 / w * np.sin(w * t),
            -q0 * w * np.sin(w * t) + v0 * np.cos(w * t))


def kepler_coefficient(k, r):
    return k / r ** 3


def harmonic_coefficient(k):
    return 4.0 * k


def power_law_coefficient(k, n, r):
    """U = -k/r^n: U' = nk/r^(n+1), U'' = -n(n+1)k/r^(n+2)."""
    return n * k * (2.0 - n) / r ** (n + 2)


def kepler_period(k, r):
    return 2.0 * math.pi * math.sqrt(r ** 3 / k)


def pendulum_small_angle_period(g):
    return 2.0 * math.pi / math.sqrt(g)
