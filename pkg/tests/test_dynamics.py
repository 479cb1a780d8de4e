import math
import os
import subprocess
import sys

import numpy as np
import pytest

from jacobivar import backend
from jacobivar.dynamics import (IntegrationSettings, combined_rhs, drift_report,
                                integrate, jacobian_rhs, linearization_error)
from jacobivar.errors import IntegrationSettingsError, SingularMassError
from jacobivar.expr import differentiate, evaluate
from jacobivar.state import FlowState
from jacobivar.variational import LagrangianSystem, derive

from conftest import (DOUBLE_PENDULUM, DRIVEN, FREE, HENON_HEILES, MAGNETIC_TRAP,
                      OSCILLATOR, PENDULUM, RHEONOMIC)
from oracles import SympySystem, oscillator

needs_compiled = pytest.mark.skipif(not backend.compiled_available(),
                                    reason="compiled extension not built")


# ---------------------------------------------------------------- FlowState

def test_flow_state_vector_round_trip():
    s = FlowState(0.5, [1, 2], [3, 4], [5, 6], [7, 8])
    y = s.as_vector()
    np.testing.assert_array_equal(y, np.arange(1, 9))
    back = FlowState.from_vector(0.5, y, 2)
    np.testing.assert_array_equal(back.epsdot, [7, 8])
    assert back.is_finite()
    assert not FlowState(0, [math.nan], [0]).is_finite()


def test_flow_state_is_read_only():
    s = FlowState(0, [1.0], [0.0])
    with pytest.raises(ValueError):
        s.q[0] = 2.0
    np.testing.assert_array_equal(s.eps, [0.0])


# ------------------------------------------------------------ combined_rhs

def test_combined_rhs_oscillator(derived):
    d = combined_rhs(derived(OSCILLATOR), FlowState(0, [1.0], [0.0], [1.0], [0.0]))
    assert (d.qdot[0], d.qddot[0], d.epsdot[0], d.epsddot[0]) == (0.0, -1.0, 0.0, -1.0)


def test_combined_rhs_free_particle(derived):
    d = combined_rhs(derived(FREE), FlowState(0, [0.0], [1.0], [0.0], [1.0]))
    assert (d.qdot[0], d.qddot[0], d.epsdot[0], d.epsddot[0]) == (1.0, 0.0, 1.0, 0.0)


def test_combined_rhs_pendulum(derived):
    d = combined_rhs(derived(PENDULUM), FlowState(0, [0.5], [0.0], [1e-3], [0.0]))
    assert d.epsddot[0] == pytest.approx(-math.cos(0.5) * 1e-3, rel=1e-14)
    assert d.epsddot[0] == pytest.approx(-8.7758e-4, abs=1e-8)


def test_combined_rhs_propagates_singular_mass():
    ds = derive(LagrangianSystem.from_text(["q1"], "q1*qd1"))
    with pytest.raises(SingularMassError):
        combined_rhs(ds, FlowState(0, [1.0], [0.0], [1.0], [0.0]))


# ------------------------------------------------------------- jacobian_rhs

def test_jacobian_rhs_oscillator(derived):
    ds = derived(OSCILLATOR)
    s = FlowState(0, [0.7], [-0.2], [0.3], [1.1])
    e, ed = jacobian_rhs(ds, s)
    d = combined_rhs(ds, s)
    np.testing.assert_allclose(e, d.epsdot, rtol=1e-6)
    np.testing.assert_allclose(ed, d.epsddot, rtol=1e-6)


def test_jacobian_rhs_free_particle_exact(derived):
    ds = derived(FREE)
    s = FlowState(0, [0.0], [1.0], [0.0], [1.0])
    e, ed = jacobian_rhs(ds, s)
    assert e[0] == pytest.approx(1.0, abs=1e-12) and ed[0] == 0.0


@pytest.mark.parametrize("sysdef", [PENDULUM, DOUBLE_PENDULUM, MAGNETIC_TRAP, HENON_HEILES, RHEONOMIC],
                         ids=["pendulum", "double_pendulum", "magnetic_trap", "henon_heiles", "rheonomic"])
def test_jacobian_rhs_matches_direct(sysdef, derived):
    ds = derived(sysdef)
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        n = ds.n
        s = FlowState(rng.uniform(0, 3), rng.uniform(-1.5, 1.5, n), rng.uniform(-1.5, 1.5, n),
                      rng.uniform(-1, 1, n), rng.uniform(-1, 1, n))
        d = combined_rhs(ds, s)
        _, ed = jacobian_rhs(ds, s)
        worst = max(worst, np.linalg.norm(ed - d.epsddot) / max(1e-300, np.linalg.norm(d.epsddot)))
    assert worst <= 1e-5


# --------------------------------------------------------------- integrate

def test_oscillator_one_period(derived):
    ds = derived(OSCILLATOR)
    res = integrate(ds, FlowState(0, [1.0], [0.0], [1.0], [0.0]),
                    IntegrationSettings(t_end=2 * math.pi, dt=1e-3))
    assert res.completed
    assert res.t[-1] == 2 * math.pi
    assert abs(res.q[-1, 0] - 1.0) <= 1e-8
    H_d, h_d = drift_report(res)
    assert H_d <= 1e-10
    assert h_d <= 1e-10


def test_oscillator_matches_closed_form(derived):
    ds = derived(OSCILLATOR)
    res = integrate(ds, FlowState(0, [0.3], [0.8], [-0.5], [0.25]),
                    IntegrationSettings(t_end=10.0, dt=1e-3, output_every=0.5))
    q, v = oscillator(res.t, 0.3, 0.8, 1.0)
    e, ed = oscillator(res.t, -0.5, 0.25, 1.0)
    np.testing.assert_allclose(res.q[:, 0], q, atol=1e-11)
    np.testing.assert_allclose(res.qdot[:, 0], v, atol=1e-11)
    np.testing.assert_allclose(res.eps[:, 0], e, atol=1e-11)
    np.testing.assert_allclose(res.epsdot[:, 0], ed, atol=1e-11)


def test_samples_and_cadence(derived):
    ds = derived(PENDULUM)
    res = integrate(ds, FlowState(0, [1.0], [0.0], [1.0], [0.0]),
                    IntegrationSettings(t_end=1.05, dt=0.01, output_every=0.1))
    assert np.all(np.diff(res.t) > 0)
    np.testing.assert_allclose(res.t[:11], np.arange(11) * 0.1, atol=1e-12)
    assert res.t[-1] == 1.05
    assert len(res) == 12


def test_drift_shrinks_with_order_four(derived):
    ds = derived(PENDULUM)
    init = FlowState(0, [2.0], [0.0], [1.0], [0.0])
    d1, _ = drift_report(integrate(ds, init, IntegrationSettings(t_end=10, dt=0.02)))
    d2, _ = drift_report(integrate(ds, init, IntegrationSettings(t_end=10, dt=0.01)))
    assert 8.0 <= d1 / d2 <= 32.0


def test_global_error_order(derived):
    ds = derived(OSCILLATOR)
    init = FlowState(0, [1.0], [0.0])
    errs = []
    for dt in (0.1, 0.05):
        res = integrate(ds, init, IntegrationSettings(t_end=10.0, dt=dt))
        errs.append(abs(res.q[-1, 0] - math.cos(10.0)))
    assert 12.0 <= errs[0] / errs[1] <= 20.0


def test_non_autonomous_has_no_h(derived):
    res = integrate(derived(DRIVEN), FlowState(0, [0.0], [1.0], [1.0], [0.0]),
                    IntegrationSettings(t_end=1.0, dt=1e-2))
    assert res.h is None
    assert drift_report(res)[1] is None


def test_h_analogue_drifts_when_time_dependent(derived):
    """Negative control: (dH/dqdot) epsdot + (dH/dq) eps is not conserved here."""
    ds = derived(DRIVEN)
    res = integrate(ds, FlowState(0, [0.0], [1.0], [1.0], [0.0]),
                    IntegrationSettings(t_end=10.0, dt=1e-3, output_every=0.1))
    dHdv = differentiate(ds.H, "qd1")
    dHdq = differentiate(ds.H, "q1")
    vals = []
    for i in range(len(res)):
        b = ds.bindings(res.state(i))
        vals.append(evaluate(dHdv, b) * res.epsdot[i, 0] + evaluate(dHdq, b) * res.eps[i, 0])
    assert max(abs(v - vals[0]) for v in vals) > 1e-3


@pytest.mark.parametrize("sysdef", [DOUBLE_PENDULUM, MAGNETIC_TRAP, HENON_HEILES],
                         ids=["double_pendulum", "magnetic_trap", "henon_heiles"])
def test_conservation_two_dof(sysdef, derived):
    ds = derived(sysdef)
    init = FlowState(0, [0.3, -0.2], [0.1, 0.2], [1e-2, 0.0], [0.0, 1e-2])
    H_d, h_d = drift_report(integrate(ds, init, IntegrationSettings(t_end=10, dt=1e-3)))
    assert H_d <= 1e-9
    assert h_d <= 1e-9


def test_rkf45_accuracy(derived):
    ds = derived(OSCILLATOR)
    res = integrate(ds, FlowState(0, [1.0], [0.0], [0.0], [1.0]),
                    IntegrationSettings(t_end=10.0, method="rkf45", atol=1e-12, rtol=1e-12,
                                        output_every=1.0))
    assert res.completed
    np.testing.assert_allclose(res.t, np.arange(11.0), atol=1e-12)
    np.testing.assert_allclose(res.q[:, 0], np.cos(res.t), atol=1e-9)
    np.testing.assert_allclose(res.eps[:, 0], np.sin(res.t), atol=1e-9)


def test_rkf45_matches_rk4(derived):
    ds = derived(DOUBLE_PENDULUM)
    init = FlowState(0, [1.2, -0.4], [0.0, 0.3], [1e-3, 0.0], [0.0, 0.0])
    a = integrate(ds, init, IntegrationSettings(t_end=3.0, dt=1e-3, output_every=0.5))
    b = integrate(ds, init, IntegrationSettings(t_end=3.0, method="rkf45", atol=1e-11, rtol=1e-11,
                                                output_every=0.5))
    np.testing.assert_allclose(a.t, b.t, atol=1e-12)
    np.testing.assert_allclose(a.y, b.y, atol=1e-7)


def test_rheonomic_matches_sympy_rhs(derived):
    """Time-dependent mass and gyroscopic terms against an independent derivation."""
    ds = derived(RHEONOMIC)
    coords, text, params = RHEONOMIC
    ref = SympySystem(coords, ds.table.velocities, text, params)
    rng = np.random.default_rng(12)
    for _ in range(20):
        s = FlowState(rng.uniform(0, 5), rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2),
                      rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2))
        d = combined_rhs(ds, s)
        np.testing.assert_allclose(d.epsddot, ref.epsddot(s.t, s.q, s.qdot, s.eps, s.epsdot),
                                   rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("bad", [
    dict(dt=0.0), dict(dt=-1e-3), dict(t_end=0.0), dict(method="euler"),
    dict(method="rkf45", atol=0.0), dict(output_every=0.0),
])
def test_invalid_settings(bad, derived):
    with pytest.raises(IntegrationSettingsError):
        integrate(derived(OSCILLATOR), FlowState(0, [1.0], [0.0]), IntegrationSettings(**bad))


def test_singular_mass_terminates_run():
    # det M = (t - 1)^2 vanishes at t = 1, the last stage of the step from 0.999
    ds = derive(LagrangianSystem.from_text(["q1", "q2"], "(qd1 + qd2)^2/2 + (t - 1)^2*qd2^2/2"))
    res = integrate(ds, FlowState(0, [0.0, 0.0], [1.0, 0.5]), IntegrationSettings(t_end=5.0, dt=1e-3))
    assert res.reason == "singular-mass"
    assert "det(M) != 0" in res.message
    assert res.t[-1] == pytest.approx(0.999, abs=1e-12)


def test_singular_at_start():
    ds = derive(LagrangianSystem.from_text(["q1"], "q1*qd1"))
    res = integrate(ds, FlowState(0, [1.0], [0.0]), IntegrationSettings(t_end=1.0))
    assert res.reason == "singular-mass"
    assert len(res) == 1
    with pytest.raises(ValueError):
        drift_report(res)


def test_divergence_guard():
    # qddot = q^3 blows up in finite time (t = sqrt(2) from q = 1, qdot = 1/sqrt(2))
    ds = derive(LagrangianSystem.from_text(["q1"], "qd1^2/2 + q1^4/4"))
    res = integrate(ds, FlowState(0, [1.0], [1.0 / math.sqrt(2)]), IntegrationSettings(t_end=5.0))
    assert res.reason == "diverged"
    assert res.t[-1] < math.sqrt(2)
    assert np.all(np.isfinite(res.y))


def test_linearization_oracle(derived):
    err, t, rel = linearization_error(derived(PENDULUM), FlowState(0, [1.0], [0.0], [1.0], [0.0]),
                                      IntegrationSettings(t_end=10.0, dt=1e-3))
    assert t[-1] == 10.0
    assert err <= 1e-3


def test_fixed_step_runs_are_bit_identical(derived):
    ds = derived(DOUBLE_PENDULUM)
    init = FlowState(0, [1.2, -0.4], [0.0, 0.3], [1e-3, 0.0], [0.0, 0.0])
    a = integrate(ds, init, IntegrationSettings(t_end=2.0, dt=1e-3))
    b = integrate(ds, init, IntegrationSettings(t_end=2.0, dt=1e-3))
    assert np.array_equal(a.y, b.y) and np.array_equal(a.H, b.H)


# ------------------------------------------------------------------ backends

@needs_compiled
@pytest.mark.parametrize("sysdef", [PENDULUM, DOUBLE_PENDULUM, MAGNETIC_TRAP, RHEONOMIC],
                         ids=["pendulum", "double_pendulum", "magnetic_trap", "rheonomic"])
def test_backends_agree_bitwise(sysdef, derived):
    ds = derived(sysdef)
    n = ds.n
    y0 = np.concatenate([np.full(n, 0.4), np.full(n, -0.1), np.full(n, 1e-2), np.zeros(n)])
    out = {}
    for name in ("compiled", "python"):
        flow = backend.make_flow(ds, 1, name)
        y = y0.copy()
        st, done = flow.advance_rk4(0.0, 0, 1e-3, 300, y)
        assert (st, done) == (backend.STATUS_OK, 300)
        st, t, h = flow.advance_rkf45(0.3, 0.6, 1e-3, 1e-10, 1e-10, y)
        assert st == backend.STATUS_OK and t == 0.6
        out[name] = y
    assert np.array_equal(out["compiled"], out["python"])


@pytest.mark.parametrize("name", ["python"] + (["compiled"] if backend.compiled_available() else []))
@pytest.mark.parametrize("sysdef", [PENDULUM, DOUBLE_PENDULUM, RHEONOMIC],
                         ids=["pendulum", "double_pendulum", "rheonomic"])
def test_kernel_rhs_matches_reference(name, sysdef, derived):
    ds = derived(sysdef)
    flow = backend.make_flow(ds, 1, name)
    rng = np.random.default_rng(13)
    for _ in range(10):
        n = ds.n
        s = FlowState(rng.uniform(0, 2), rng.uniform(-1, 1, n), rng.uniform(-1, 1, n),
                      rng.uniform(-1, 1, n), rng.uniform(-1, 1, n))
        st, dy = flow.rhs(s.t, s.as_vector())
        assert st == backend.STATUS_OK
        d = combined_rhs(ds, s)
        np.testing.assert_allclose(dy, np.concatenate([d.qdot, d.qddot, d.epsdot, d.epsddot]),
                                   rtol=1e-12, atol=1e-13)


@pytest.mark.parametrize("name", ["python"] + (["compiled"] if backend.compiled_available() else []))
def test_kernel_reports_singular(name):
    ds = derive(LagrangianSystem.from_text(["q1"], "q1*qd1"))
    st, dy = backend.make_flow(ds, 1, name).rhs(0.0, np.array([1.0, 0.0, 0.0, 0.0]))
    assert st == backend.STATUS_SINGULAR
    assert np.all(np.isnan(dy))


@pytest.mark.parametrize("name", ["python"] + (["compiled"] if backend.compiled_available() else []))
def test_tape_program_matches_evaluate(name, derived):
    ds = derived(DOUBLE_PENDULUM)
    prog = backend.implementation(name).TapeProgram(backend.monitor_tape(ds))
    s = FlowState(0, [0.3, 0.1], [-0.2, 0.5], [1.0, 0.0], [0.0, 1.0])
    x = [s.t, *s.q, *s.qdot, *s.eps, *s.epsdot, *backend.parameter_values(ds)]
    out = prog(x)
    b = ds.bindings(s)
    assert out[0] == pytest.approx(evaluate(ds.H, b), rel=1e-14)
    assert out[1] == pytest.approx(evaluate(ds.h, b), rel=1e-14)
    np.testing.assert_array_equal(prog.batch(np.array([x, x])), np.array([out, out]))
    with pytest.raises(ValueError):
        prog(x[:-1])


def test_pure_python_switch():
    env = dict(os.environ, JACOBIVAR_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import jacobivar; print(jacobivar.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_compiled
def test_compiled_is_default():
    if os.environ.get("JACOBIVAR_PURE_PYTHON") == "1":
        pytest.skip("pure-Python backend forced")
    assert backend.BACKEND == "compiled"
