"""Compiled vs pure-Python kernels on the same tapes.

    python benchmarks/bench_kernels.py [--repeat 3]

Times three workloads on each backend and checks that both produce the
same numbers: tape evaluation, fixed-step integration of the double
pendulum with one deviation vector, and a short Lyapunov run on the
Henon-Heiles system.
"""
import argparse
import time

import numpy as np

from jacobivar import backend
from jacobivar.lyapunov import LyapunovSettings, lyapunov_spectrum
from jacobivar.dynamics import IntegrationSettings
from jacobivar.state import FlowState
from jacobivar.variational import LagrangianSystem, derive

DOUBLE_PENDULUM = LagrangianSystem.from_text(
    ["q1", "q2"],
    "qd1^2 + qd2^2/2 + qd1*qd2*cos(q1 - q2) + 2*g*cos(q1) + g*cos(q2)",
    {"g": 9.81})
HENON_HEILES = LagrangianSystem.from_text(
    ["x", "y"], "(dx^2 + dy^2)/2 - (x^2 + y^2)/2 - x^2*y + y^3/3")


def _best(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_tape(ds, name, repeat):
    prog = backend.implementation(name).TapeProgram(backend.flow_tape(ds))
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, size=(2000, prog.n_in))
    return _best(lambda: prog.batch(X), repeat)


def bench_rk4(ds, name, repeat, steps):
    flow = backend.make_flow(ds, 1, name)
    y0 = np.array([1.2, -0.4, 0.0, 0.3, 1e-3, 0.0, 0.0, 0.0])

    def go():
        y = y0.copy()
        flow.advance_rk4(0.0, 0, 1e-3, steps, y)
        return y
    return _best(go, repeat)


def bench_lyapunov(ds, name, repeat, total):
    init = FlowState(0.0, [0.0, 0.1], [0.5, 0.0])
    settings = LyapunovSettings(total, 1.0, IntegrationSettings(dt=1e-2))
    return _best(lambda: lyapunov_spectrum(ds, init, settings, name).exponents, repeat)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--total-time", type=float, default=20.0)
    args = ap.parse_args()

    if not backend.compiled_available():
        raise SystemExit("compiled extension not built: python setup.py build_ext --inplace")
    dp = derive(DOUBLE_PENDULUM)
    hh = derive(HENON_HEILES)
    workloads = [
        ("tape batch (2000 rows)", lambda b: bench_tape(dp, b, args.repeat)),
        (f"rk4 double pendulum ({args.steps} steps)", lambda b: bench_rk4(dp, b, args.repeat, args.steps)),
        (f"lyapunov henon-heiles (T={args.total_time:g})",
         lambda b: bench_lyapunov(hh, b, args.repeat, args.total_time)),
    ]
    print(f"{'workload':42s} {'compiled':>10s} {'python':>10s} {'speedup':>8s} {'max diff':>10s}")
    for label, fn in workloads:
        tc, oc = fn("compiled")
        tp, op = fn("python")
        diff = float(np.max(np.abs(np.asarray(oc) - np.asarray(op))))
        print(f"{label:42s} {tc:10.4f} {tp:10.4f} {tp / tc:8.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
