"""Numeric snapshot of a trajectory together with one deviation vector."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _vec(x) -> np.ndarray:
    arr = np.array(x, dtype=float, ndmin=1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FlowState:
    t: float
    q: np.ndarray
    qdot: np.ndarray
    eps: np.ndarray = None
    epsdot: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "t", float(self.t))
        q = _vec(self.q)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qdot", _vec(self.qdot))
        object.__setattr__(self, "eps", _vec(np.zeros_like(q) if self.eps is None else self.eps))
        object.__setattr__(self, "epsdot", _vec(np.zeros_like(q) if self.epsdot is None else self.epsdot))
        n = len(q)
        if not (len(self.qdot) == len(self.eps) == len(self.epsdot) == n):
            raise ValueError("q, qdot, eps and epsdot must have the same length")

    @property
    def n(self) -> int:
        return len(self.q)

    def as_vector(self) -> np.ndarray:
        """Flat ``[q, qdot, eps, epsdot]``."""
        return np.concatenate([self.q, self.qdot, self.eps, self.epsdot])

    @classmethod
    def from_vector(cls, t: float, y, n: int) -> "FlowState":
        y = np.asarray(y, dtype=float)
        return cls(t, y[:n], y[n:2 * n], y[2 * n:3 * n], y[3 * n:4 * n])

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.as_vector())))

    def __repr__(self) -> str:
        return (f"FlowState(t={self.t!r}, q={self.q.tolist()}, qdot={self.qdot.tolist()}, "
                f"eps={self.eps.tolist()}, epsdot={self.epsdot.tolist()})")
