"""Acceptance criteria, each at its stated tolerance.

Every test records one ``PASS``/``FAIL`` line (printed at the end of the
pytest run and to stdout) before asserting.
"""
import math
import random
import time

import numpy as np
import pytest

from jacobivar.dynamics import (IntegrationSettings, combined_rhs, drift_report, integrate,
                                jacobian_rhs, linearization_error)
from jacobivar.expr import differentiate, evaluate, free_symbols, parse, render
from jacobivar.lyapunov import LyapunovSettings, lyapunov_spectrum
from jacobivar.stability import (STABLE, UNSTABLE, ReferenceOrbit, cartesian_radial_deviation,
                                 integrate_normal_deviation, intrinsic_h, intrinsic_system,
                                 oscillation_period, stability_coefficient, verdict)
from jacobivar.state import FlowState
from jacobivar.variational import derive

import oracles
from conftest import (ACCEPTANCE_LINES, DOUBLE_PENDULUM, DRIVEN, HENON_HEILES, MAGNETIC_TRAP,
                      OSCILLATOR, PENDULUM, SADDLE)
from test_expr import CORPUS, random_bindings


def report(criterion, checks):
    """checks: list of (label, measured, bound, ok)."""
    ok = all(c[3] for c in checks)
    detail = "; ".join(f"{label} {value:.3g} vs {bound}" for label, value, bound, _ in checks)
    line = f"{'PASS' if ok else 'FAIL'}  [{criterion}] {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def hh_state(E, y0, angle):
    V = y0 ** 2 / 2 - y0 ** 3 / 3
    speed = math.sqrt(2 * (E - V))
    return FlowState(0, [0.0, y0], [speed * math.cos(angle), speed * math.sin(angle)])


def test_1_linearization_pendulum(derived):
    ds = derived(PENDULUM)
    start = time.perf_counter()
    err, t, _ = linearization_error(ds, FlowState(0, [1.0], [0.5], [1.0], [0.0]),
                                    IntegrationSettings(t_end=10.0, dt=1e-3, output_every=0.01),
                                    delta=1e-6)
    elapsed = time.perf_counter() - start
    assert t[-1] == 10.0
    report("1 linearization", [("max relative error", err, "<= 1e-3", err <= 1e-3),
                               ("runtime s", elapsed, "< 5", elapsed < 5.0)])


def test_2_conserved_quantities(derived):
    ds = derived(OSCILLATOR)
    res = integrate(ds, FlowState(0, [1.0], [0.0], [1.0], [0.5]),
                    IntegrationSettings(t_end=100 * 2 * math.pi, dt=1e-3, output_every=0.1))
    H_d, h_d = drift_report(res)

    orbit = ReferenceOrbit.circular("-k/r", 1.0, {"k": 1.0})
    kep = derive(intrinsic_system(orbit))
    v = orbit.speed_at(0.0)
    kres = integrate(kep, FlowState(0, [0.0, 0.0], [v, 0.0], [0.01, 1e-3], [2e-3, 0.0]),
                     IntegrationSettings(t_end=10 * orbit.orbital_period(), dt=1e-3,
                                         output_every=0.1))
    kh = np.array([intrinsic_h(orbit, y[0], y[2], y[4], y[5], y[6]) for y in kres.y])
    k_d = float(np.max(np.abs(kh - kh[0])))

    # negative control: the same formula on a time-dependent Lagrangian
    dr = derived(DRIVEN)
    dres = integrate(dr, FlowState(0, [0.0], [1.0], [1.0], [0.0]),
                     IntegrationSettings(t_end=10.0, dt=1e-3, output_every=0.1))
    dHdv, dHdq = differentiate(dr.H, "qd1"), differentiate(dr.H, "q1")
    analogue = []
    for i in range(len(dres)):
        b = dr.bindings(dres.state(i))
        analogue.append(evaluate(dHdv, b) * dres.epsdot[i, 0] + evaluate(dHdq, b) * dres.eps[i, 0])
    neg = max(abs(a - analogue[0]) for a in analogue)

    report("2 conserved quantities", [
        ("oscillator |dH|", H_d, "<= 1e-9", H_d <= 1e-9),
        ("oscillator |dh|", h_d, "<= 1e-9", h_d <= 1e-9),
        ("intrinsic Kepler |dh|", k_d, "<= 1e-8", kres.completed and k_d <= 1e-8),
        ("time-dependent control |dh|", neg, "> 1e-3", neg > 1e-3),
    ])


def test_3_double_derivation(derived):
    rng = np.random.default_rng(3)
    worst = {}
    for name, sysdef in [("pendulum", PENDULUM), ("magnetic+potential", MAGNETIC_TRAP),
                         ("double pendulum", DOUBLE_PENDULUM)]:
        ds = derived(sysdef)
        n = ds.n
        w = 0.0
        for _ in range(100):
            q, v, e, ed = (rng.uniform(-1.5, 1.5, n) for _ in range(4))
            st = FlowState(0.0, q, v, e, ed)
            direct = combined_rhs(ds, st).epsddot
            _, fd = jacobian_rhs(ds, st)
            w = max(w, float(np.linalg.norm(direct - fd) / np.linalg.norm(direct)))
        worst[name] = w
    report("3 double derivation", [(f"{k} max relative", v, "<= 1e-5", v <= 1e-5)
                                   for k, v in worst.items()])


def test_4_lyapunov(derived):
    def spectrum(sysdef, init, T, dt=1e-3):
        return lyapunov_spectrum(derived(sysdef), init,
                                 LyapunovSettings(T, 1.0, IntegrationSettings(dt=dt))).exponents

    start = time.perf_counter()
    osc = spectrum(OSCILLATOR, FlowState(0, [1.0], [0.0]), 1000.0)
    sad = spectrum(SADDLE, FlowState(0, [0.0], [0.0]), 50.0)
    hh = spectrum(HENON_HEILES, hh_state(1 / 6, 0.0, math.atan2(0.8, 0.6)), 1000.0, dt=1e-2)
    dp = spectrum(DOUBLE_PENDULUM, FlowState(0, [1.2, -0.4], [0.0, 0.3]), 1000.0, dt=5e-3)
    elapsed = time.perf_counter() - start

    osc_err = float(np.max(np.abs(osc)))
    sad_err = float(np.max(np.abs(sad - [1.0, -1.0])))
    sums = {"saddle": abs(sad.sum()), "oscillator": abs(osc.sum()),
            "Henon-Heiles": abs(hh.sum()), "double pendulum": abs(dp.sum())}
    report("4 Lyapunov", [
        ("oscillator max |lambda|", osc_err, "<= 1e-2", osc_err <= 1e-2),
        ("saddle max |lambda - (+1,-1)|", sad_err, "<= 0.02", sad_err <= 0.02),
        *[(f"{k} |sum|", v, "<= 5e-2", v <= 5e-2) for k, v in sums.items()],
        ("runtime s", elapsed, "< 30", elapsed < 30.0),
    ])


def test_5_stability_example():
    k, r = 1.5, 2.0
    orbit = ReferenceOrbit.circular("-k/r", r, {"k": k})
    exact = oracles.kepler_coefficient(k, r)
    coef = max(abs(stability_coefficient(orbit, s) - exact) / exact
               for s in np.linspace(0, 2 * math.pi * r, 33))

    T = oracles.kepler_period(k, r)
    nd = integrate_normal_deviation(orbit, 0.0, 1e-3)
    p_intr = oscillation_period(nd.t, nd.eps_z)
    period_err = abs(p_intr - T) / T

    below = verdict(ReferenceOrbit.circular("-k/r^n", 1.0, {"k": 1.0, "n": 1.9})).verdict
    above = verdict(ReferenceOrbit.circular("-k/r^n", 1.0, {"k": 1.0, "n": 2.1})).verdict

    t, radial = cartesian_radial_deviation("-k/r", r, {"k": k})
    cart_err = abs(oscillation_period(t, radial) - p_intr) / p_intr

    report("5 stability example", [
        ("Kepler coefficient relative error", coef, "<= 1e-12", coef <= 1e-12),
        ("eps_z period vs orbital period", period_err, "<= 1%", period_err <= 0.01),
        ("n=1.9 stable", float(below == STABLE), "1", below == STABLE),
        ("n=2.1 unstable", float(above == UNSTABLE), "1", above == UNSTABLE),
        ("Cartesian vs intrinsic period", cart_err, "<= 1%", cart_err <= 0.01),
    ])


def test_6_symbolic_engine():
    worst = 0.0
    for text in CORPUS:
        tree = parse(text)
        rng = random.Random(len(text) * 7919 + ord(text[0]))
        for var in sorted(free_symbols(tree)):
            D = differentiate(tree, var)
            for _ in range(200):
                b = random_bindings(rng)
                x = b[var]
                step = 1e-5 * max(1.0, abs(x))
                d = evaluate(D, b)
                fd = oracles.central_difference(lambda val: evaluate(tree, {**b, var: val}), x, step)
                worst = max(worst, abs(d - fd) / (1.0 + abs(d)))
    round_trips = sum(parse(render(parse(t))) == parse(t) for t in CORPUS)
    report("6 symbolic engine", [
        ("derivative vs finite difference", worst, "<= 1e-6", worst <= 1e-6),
        ("round-trips", round_trips, f"== {len(CORPUS)}",
         round_trips == len(CORPUS) and len(CORPUS) >= 50),
    ])


def test_7_rk4_order(derived):
    ds = derived(OSCILLATOR)
    errs = []
    for dt in (0.1, 0.05):
        res = integrate(ds, FlowState(0, [1.0], [0.0]), IntegrationSettings(t_end=10.0, dt=dt))
        errs.append(abs(res.q[-1, 0] - oracles.oscillator(10.0, 1.0, 0.0, 1.0)[0]))
    ratio = errs[0] / errs[1]
    report("7 rk4 order", [("error ratio under halving", ratio, "in [12, 20]", 12.0 <= ratio <= 20.0)])


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
