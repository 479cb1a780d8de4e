"""Small dense LU factorisation with partial pivoting.

The matrices here are N x N with N the number of degrees of freedom, so
a plain Doolittle loop is all that is needed. The compiled kernel carries
its own copy of the same loop.
"""
from __future__ import annotations

import numpy as np

SINGULAR_RTOL = 1e-12


class LU:
    """LU factors of a square matrix, ``P A = L U`` packed into one array."""

    def __init__(self, a):
        lu = np.array(a, dtype=float, copy=True)
        n = lu.shape[0]
        if lu.shape != (n, n):
            raise ValueError("LU needs a square matrix")
        piv = np.arange(n)
        sign = 1.0
        for k in range(n):
            p = k + int(np.argmax(np.abs(lu[k:, k])))
            if p != k:
                lu[[k, p]] = lu[[p, k]]
                piv[[k, p]] = piv[[p, k]]
                sign = -sign
            if lu[k, k] == 0.0:
                continue
            for i in range(k + 1, n):
                lu[i, k] /= lu[k, k]
                lu[i, k + 1:] -= lu[i, k] * lu[k, k + 1:]
        self.lu = lu
        self.piv = piv
        self.sign = sign
        self.scale = float(np.max(np.sum(np.abs(a), axis=1))) if n else 0.0

    @property
    def det(self) -> float:
        return self.sign * float(np.prod(np.diag(self.lu)))

    def is_singular(self, rtol: float = SINGULAR_RTOL) -> bool:
        """|det| below ``rtol * scale**n`` with scale the max row sum."""
        n = self.lu.shape[0]
        if not self.scale > 0.0:
            return True
        return not abs(self.det) >= rtol * self.scale ** n

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        n = self.lu.shape[0]
        x = b[self.piv].copy()
        for i in range(n):
            x[i] -= self.lu[i, :i] @ x[:i]
        for i in range(n - 1, -1, -1):
            x[i] = (x[i] - self.lu[i, i + 1:] @ x[i + 1:]) / self.lu[i, i]
        return x
