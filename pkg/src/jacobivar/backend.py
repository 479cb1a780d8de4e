"""Kernel backend selection and tape layouts for a derived system.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``JACOBIVAR_PURE_PYTHON=1`` is set, the pure-Python
twin takes over. Both expose ``TapeProgram`` and ``Flow`` with the same
signatures.
"""
from __future__ import annotations

import importlib
import os
from types import ModuleType
from typing import Optional

from .tape import Tape, compile_tape

STATUS_OK, STATUS_SINGULAR, STATUS_DIVERGED, STATUS_UNDERFLOW = 0, 1, 2, 3


def _load_default() -> ModuleType:
    if os.environ.get("JACOBIVAR_PURE_PYTHON") == "1":
        return importlib.import_module("jacobivar._fallback")
    try:
        return importlib.import_module("jacobivar._kernels")
    except ImportError:
        return importlib.import_module("jacobivar._fallback")


_default = _load_default()
BACKEND: str = _default.BACKEND


def compiled_available() -> bool:
    try:
        importlib.import_module("jacobivar._kernels")
    except ImportError:
        return False
    return True


def implementation(name: Optional[str] = None) -> ModuleType:
    """``None`` -> the default, ``"compiled"`` or ``"python"`` explicitly."""
    if name is None:
        return _default
    if name == "compiled":
        return importlib.import_module("jacobivar._kernels")
    if name == "python":
        return importlib.import_module("jacobivar._fallback")
    raise ValueError(f"unknown backend {name!r}")


def input_slots(ds) -> list[str]:
    tb = ds.table
    return [tb.time, *tb.coordinates, *tb.velocities, *tb.deviations,
            *tb.deviation_velocities, *tb.parameters]


def parameter_values(ds) -> list[float]:
    return [float(v) for v in ds.table.parameters.values()]


def _cached(build):
    def wrapper(ds):
        key = build.__name__
        if key not in ds._cache:
            ds._cache[key] = build(ds)
        return ds._cache[key]
    wrapper.__name__ = build.__name__
    wrapper.__doc__ = build.__doc__
    return wrapper


@_cached
def flow_tape(ds) -> Tape:
    """Outputs: dL/dq, d2L/dqdot dt, M, Mvq, Mqq, then the partials of M and Mvq."""
    n = ds.n
    outs = list(ds.dL_dq) + list(ds.Mvt)
    for block in (ds.M, ds.Mvq, ds.Mqq):
        outs.extend(block[a][b] for a in range(n) for b in range(n))
    for partials in (ds.M_partials, ds.Mvq_partials):
        for a in range(n):
            for b in range(n):
                p = partials[a][b]
                outs.extend(p.dq)
                outs.extend(p.dv)
                outs.append(p.dt)
    return compile_tape(outs, input_slots(ds))


@_cached
def monitor_tape(ds) -> Tape:
    """Outputs: H, and h when the system is autonomous."""
    outs = [ds.H] + ([ds.h] if ds.h is not None else [])
    return compile_tape(outs, input_slots(ds))


def make_flow(ds, m: int = 1, backend: Optional[str] = None):
    return implementation(backend).Flow(flow_tape(ds), ds.n, m, parameter_values(ds))


def make_monitor(ds, backend: Optional[str] = None):
    return implementation(backend).TapeProgram(monitor_tape(ds))
