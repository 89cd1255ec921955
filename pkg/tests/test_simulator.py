import math

import numpy as np
import pytest
from dataclasses import replace
from hypothesis import given, settings, strategies as st

from robust_vsi.lti import StateSpaceSystem, c2d_tustin, tf_to_ss, RationalSystem
from robust_vsi.plant import lcl_matrices
from robust_vsi.simulator import (Event, ImpedanceJump, InitialCondition, LoadStep, PllState,
                                  Scenario, ScenarioError, SimOptions, SimulationError, Trace,
                                  VoltageSag, _period_map, _rk4, cycle_window, fourier_coefficient,
                                  load_scenario, reference_current, run_scenario, save_scenario,
                                  sogi_pll_step, steady_windows, thd, tracking_rms,
                                  whole_cycle_samples)

F0, FS = 60.0, 20_000.0
W_O = 2 * np.pi * F0
TS = 1 / FS


# ---------------------------------------------------------------- integration

def test_period_map_equals_substep_rk4(params):
    n_sub, h = 50, TS / 50
    pm = _period_map(params, 0.3e-3, 0.02, n_sub, h, W_O, [1, 3])
    rng = np.random.default_rng(5)
    x0, u, t0 = rng.standard_normal(3), 37.0, 0.0123
    amp = {1: 300.0, 3: 6.0}

    def vth(t):
        return sum(a * math.sin(k * W_O * t) for k, a in amp.items())

    x = x0.copy()
    for j in range(n_sub):
        t = t0 + j * h
        b = lambda tt: pm.B[:, 0] * u + pm.B[:, 1] * vth(tt)
        x = _rk4(pm.A, x, b(t), b(t + h / 2), b(t + h), h)
    y = pm.phi @ x0 + pm.gam_u * u
    for k, a in amp.items():
        y += a * (math.sin(k * W_O * t0) * pm.s[k] + math.cos(k * W_O * t0) * pm.c[k])
    assert np.allclose(x, y, rtol=1e-10, atol=1e-10)


def test_energy_decays_without_sources(params):
    A, _, _ = lcl_matrices(params.l_f, params.r_f, params.c_f, params.l_g + 0.2e-3, params.r_g + 0.01)
    pm = _period_map(params, 0.2e-3, 0.01, 50, TS / 50, W_O, [])
    Lt = params.l_g + 0.2e-3
    M = np.diag([params.l_f, Lt, params.c_f])
    x = np.array([10.0, -5.0, 200.0])
    e = [0.5 * x @ M @ x]
    for _ in range(400):
        x = pm.phi @ x
        e.append(0.5 * x @ M @ x)
    assert np.all(np.diff(e) <= 1e-12 * e[0])
    assert e[-1] < 0.5 * e[0]


# ---------------------------------------------------------------- PLL and reference

def _run_pll(signal, n, st=None):
    st = st or PllState(omega_est=W_O)
    out = []
    for k in range(n):
        st = sogi_pll_step(st, signal(k * TS), TS, W_O)
        out.append(st)
    return out


def _phase_err(theta, true):
    return abs((theta - true + math.pi) % (2 * math.pi) - math.pi)


def test_pll_locks_clean_grid():
    v = lambda t: math.sqrt(2) * 240 * math.sin(W_O * t)
    n = int(0.2 / TS)
    s = _run_pll(v, n)[-1]
    t = (n - 1) * TS
    assert abs(s.vrms_est - 240) < 1.0
    assert math.degrees(_phase_err(s.theta, W_O * t % (2 * math.pi))) < 1.0
    assert 0 <= s.theta < 2 * math.pi


def test_pll_frequency_step():
    w2 = 1.05 * W_O
    t_step = 0.2
    def v(t):
        if t < t_step:
            return math.sqrt(2) * 240 * math.sin(W_O * t)
        return math.sqrt(2) * 240 * math.sin(W_O * t_step + w2 * (t - t_step))
    n = int((t_step + 5 / F0) / TS)
    s = _run_pll(v, n)[-1]
    t = (n - 1) * TS
    true = (W_O * t_step + w2 * (t - t_step)) % (2 * math.pi)
    assert math.degrees(_phase_err(s.theta, true)) < 2.0


def test_pll_zero_input():
    states = _run_pll(lambda t: 0.0, 1000)
    assert states[-1].vrms_est == 0.0
    d = (states[-1].theta - states[-2].theta) % (2 * math.pi)
    assert d == pytest.approx(W_O * TS)


def test_reference_current_examples(params):
    th = np.linspace(0, 2 * np.pi, 3601)
    i = np.array([reference_current(params.p_rated, params.q_rated, 240.0, x) for x in th])
    assert i.max() == pytest.approx(64.82, abs=0.01)
    lag = math.degrees(math.atan2(params.q_rated, params.p_rated))
    assert lag == pytest.approx(18.195, abs=1e-3)
    assert reference_current(1000.0, 0.0, 240.0, 0.7) == pytest.approx(math.sqrt(2) * 1000 / 240 * math.sin(0.7))
    assert reference_current(0.0, 500.0, 240.0, 0.7) == pytest.approx(math.sqrt(2) * 500 / 240 * math.sin(0.7 - math.pi / 2))
    assert reference_current(0.0, 0.0, 240.0, 1.0) == 0.0
    assert reference_current(1000.0, 0.0, 0.5, 1.0, last=3.0) == 3.0


# ---------------------------------------------------------------- metrics

def test_thd_examples():
    n = whole_cycle_samples(F0, FS, 2)
    assert n == 1000
    t = np.arange(n) / FS
    s = np.sin(W_O * t)
    assert thd(s, F0, FS) == pytest.approx(0.0, abs=1e-10)
    assert thd(s + 0.1 * np.sin(3 * W_O * t), F0, FS) == pytest.approx(0.10, abs=1e-6)
    x = s + 0.05 * np.sin(3 * W_O * t + 0.3) + 0.03 * np.cos(5 * W_O * t)
    assert thd(x, F0, FS) == pytest.approx(math.sqrt(0.0025 + 0.0009), abs=1e-6)
    with pytest.raises(ValueError):
        thd(s[:700], F0, FS)


@settings(max_examples=25, deadline=None)
@given(a=st.floats(0.1, 100), ph=st.floats(-3, 3), h=st.integers(1, 9))
def test_fourier_coefficient_recovers_phasor(a, ph, h):
    t = np.arange(1000) / FS
    X = fourier_coefficient(a * np.cos(h * W_O * t + ph), F0, FS, h)
    assert abs(X - a * np.exp(1j * ph)) <= 1e-9 * a


def _trace(err, t0=0.0):
    n = len(err)
    cols = {c: np.zeros(n) for c in ("i_ref", "i_inv", "v_pcc", "v_inv", "v_th", "p_out", "q_out",
                                     "pll_theta", "pll_vrms")}
    cols["t"] = t0 + np.arange(n) * TS
    cols["err"] = np.asarray(err, float)
    return Trace(cols, TS)


def test_tracking_rms_examples():
    assert tracking_rms(_trace(np.zeros(100)), 0.0, 99 * TS) == 0.0
    assert tracking_rms(_trace(np.full(100, -2.5)), 0.0, 50 * TS) == pytest.approx(2.5)
    with pytest.raises(ValueError):
        tracking_rms(_trace(np.zeros(100)), 1.0, 2.0)
    with pytest.raises(ValueError):
        tracking_rms(_trace(np.zeros(100)), 10 * TS, 10 * TS)


def test_windows():
    tr = _trace(np.arange(2000.0))
    m = cycle_window(tr, 2000 * TS, 3, F0)
    assert m.sum() == 1000 and m[-1]
    sc = Scenario("w", 1.0, events=(Event(0.5, LoadStep(1, 0)), Event(0.52, VoltageSag(0.8))))
    assert steady_windows(sc, 0.05) == [(0.2, 0.5), (0.52 + 0.05, 1.0)]


# ---------------------------------------------------------------- scenarios

def test_scenario_validation():
    with pytest.raises(ScenarioError):
        Scenario("x", 1.0, events=(Event(0.5, LoadStep(1, 0)), Event(0.2, LoadStep(0, 0))))
    with pytest.raises(ScenarioError):
        Scenario("x", 1.0, events=(Event(1.5, LoadStep(1, 0)),))
    with pytest.raises(ScenarioError):
        Scenario("x", 1.0, grid_harmonics={3: -0.1})
    with pytest.raises(ScenarioError):
        VoltageSag(0.0)
    with pytest.raises(ScenarioError):
        ImpedanceJump(-1e-3, 0.0)
    with pytest.raises(ScenarioError):
        Scenario.from_dict({"duration_s": 1.0})


def test_shipped_scenarios_roundtrip(tmp_path, params):
    import pathlib
    root = pathlib.Path(__file__).resolve().parents[1] / "configs" / "scenarios"
    c1 = load_scenario(root / "case1.json")
    assert c1.event_times() == pytest.approx([50.03, 50.12, 50.2, 50.28, 50.36])
    assert c1.events[2].kind == LoadStep.at_fraction(params, 1.5)
    assert c1.events[1].kind == VoltageSag(0.8)
    c2 = load_scenario(root / "case2.json")
    assert c2.events[0].kind == ImpedanceJump(0.53e-3, 0.0) and c2.events[0].t == 17.53
    c3 = load_scenario(root / "case3.json")
    assert c3.initial.l_th == pytest.approx(0.1e-3)
    assert [e.t for e in c3.events] == [17.53, 17.62]
    for sc in (c1, c2, c3):
        assert sc.t_start == pytest.approx(sc.event_times()[0] - 0.5)
        p = save_scenario(sc, tmp_path / f"{sc.name}.json")
        assert load_scenario(p) == sc


# ---------------------------------------------------------------- runs

def _steady(params, **kw):
    ini = InitialCondition(p_ref=params.p_rated, q_ref=params.q_rated, **kw)
    return Scenario("steady", 0.4, initial=ini)


def test_run_refuses_bad_controllers(params, controller):
    sc = _steady(params)
    with pytest.raises(SimulationError, match="discrete"):
        run_scenario(sc, controller, params)
    with pytest.raises(SimulationError, match="sample time"):
        run_scenario(sc, c2d_tustin(controller, 1e-4), params)
    unstable = c2d_tustin(tf_to_ss(RationalSystem([1.0], [1.0, -10.0])), TS)
    with pytest.raises(SimulationError, match="refusing"):
        run_scenario(sc, unstable, params)


def test_divergence_aborts(params):
    # positive feedback through a large static gain blows up quickly
    K = StateSpaceSystem(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), np.array([[-50.0]]), dt=TS)
    sc = Scenario("div", 0.2, initial=InitialCondition(p_ref=1000.0))
    opts = SimOptions(divergence_limit=1e3)
    with pytest.raises(SimulationError, match="diverged"):
        run_scenario(sc, K, replace(params, v_dc=1e9), opts)


@pytest.fixture(scope="module")
def steady_trace(params, controller_d):
    return run_scenario(_steady(params), controller_d, params)


def test_trace_invariants(steady_trace, tmp_path):
    tr = steady_trace
    assert np.allclose(np.diff(tr.t), TS)
    assert np.array_equal(tr.err, tr.i_ref - tr.i_inv)
    p = tr.to_csv(tmp_path / "t.csv")
    back = Trace.from_csv(p)
    assert np.allclose(back.i_inv, tr.i_inv, rtol=1e-8, atol=1e-8)
    assert p.read_text().splitlines()[0] == ",".join(back.columns)


def test_power_tracking(steady_trace, params):
    m = cycle_window(steady_trace, steady_trace.t[-1] + TS, 6, F0)
    assert np.mean(steady_trace.p_out[m]) == pytest.approx(params.p_rated, rel=0.03)
    assert np.mean(steady_trace.q_out[m]) == pytest.approx(params.q_rated, rel=0.03)


def test_dt_plant_convergence(params, controller_d):
    sc = Scenario("conv", 0.12, initial=InitialCondition(l_th=0.3e-3, p_ref=params.p_rated,
                                                         q_ref=params.q_rated))
    a = run_scenario(sc, controller_d, params, SimOptions(dt_plant=1e-6))
    b = run_scenario(sc, controller_d, params, SimOptions(dt_plant=0.5e-6))
    for c in ("i_inv", "v_pcc", "v_inv"):
        x, y = getattr(a, c), getattr(b, c)
        assert np.sqrt(np.mean((x - y) ** 2)) < 1e-3 * np.sqrt(np.mean(x ** 2))


def test_events_change_plant(params, controller_d):
    sc = Scenario("ev", 0.3, events=(Event(0.1, VoltageSag(0.5)), Event(0.2, LoadStep(0.0, 0.0))),
                  initial=InitialCondition(p_ref=params.p_rated))
    tr = run_scenario(sc, controller_d, params)
    pre, post = tr.window(0.05, 0.1), tr.window(0.1, 0.2)
    assert np.max(np.abs(tr.v_th[post])) == pytest.approx(0.5 * np.max(np.abs(tr.v_th[pre])), rel=0.02)
    assert np.all(tr.i_ref[tr.window(0.2, 0.3)] == 0.0)
