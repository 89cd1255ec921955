import numpy as np
import pytest
from dataclasses import replace
from hypothesis import given, settings, strategies as st

from robust_vsi.lti import freq_response, is_stable, poles
from robust_vsi.plant import resonant_frequency
from robust_vsi.weights import (WeightConstants, WeightError, make_w_cs, make_w_d, make_w_s,
                                make_weights, nominal_omega_r, peak_biquad, second_order_lowpass)

W_O = 2 * np.pi * 60


def _mag(sys, w):
    return np.abs(freq_response(sys, np.atleast_1d(w)).value)


def _local_max_near(sys, w0, rel=0.02):
    w = np.linspace(0.8 * w0, 1.2 * w0, 40001)
    m = _mag(sys, w)
    i = int(np.argmax(m))
    return abs(w[i] - w0) <= rel * w0 and 0 < i < len(w) - 1


def test_peak_biquad_gain():
    b = peak_biquad(30.0, 0.05, W_O)
    assert abs(b(1j * W_O)) == pytest.approx(30.0)
    assert abs(b(0)) == pytest.approx(1.0)
    assert abs(b(1j * 1e7)) == pytest.approx(1.0, rel=1e-3)


def test_w_s_peaks_with_stronger_fundamental(params):
    c = WeightConstants(k_S1_gain=50.0, k_S1_cutoff=2 * np.pi * 800, k_S2=30.0, k_S3=30.0, zeta=0.01)
    w_r = nominal_omega_r(params)
    ws = make_w_s(c, W_O, w_r)
    assert _mag(ws, W_O)[0] / _mag(ws, 0.5 * W_O)[0] >= c.k_S2 / 2
    assert _local_max_near(ws, W_O)
    assert _local_max_near(ws, w_r)


def test_w_s_plateau_when_k_zeta_exceeds_one(params):
    # k zeta = 1.5 turns the peak into a broad plateau: half-frequency gain is lifted too
    c = WeightConstants(k_S1_gain=50.0, k_S1_cutoff=2 * np.pi * 800, k_S2=30.0, k_S3=30.0, zeta=0.05)
    ws = make_w_s(c, W_O, nominal_omega_r(params))
    assert _mag(ws, W_O)[0] / _mag(ws, 0.5 * W_O)[0] == pytest.approx(13.51, abs=0.01)


def test_w_s_default_resonance_peak(params):
    ws = make_weights(params)
    assert _local_max_near(ws.w_s, ws.omega_r)


def test_w_s_unity_collapse():
    c = WeightConstants(k_S2=1.0, k_S3=1.0)
    ws = make_w_s(c, W_O, 2 * np.pi * 1500)
    lp = second_order_lowpass(c.k_S1_gain, c.k_S1_cutoff)
    w = np.logspace(0, 6, 50)
    assert np.allclose(_mag(ws, w), _mag(lp, w), rtol=1e-12)


def test_nominal_resonance(params):
    w_r = nominal_omega_r(params)
    assert w_r / (2 * np.pi) == pytest.approx(resonant_frequency(params, 0.265e-3))
    assert w_r / (2 * np.pi) == pytest.approx(1593.2, abs=0.5)
    moved = make_weights(replace(params, l_th_max=1.0e-3))
    assert moved.omega_r < w_r


def test_w_cs_shape():
    c = WeightConstants()
    w = make_w_cs(c, W_O)
    assert abs(w(0)) == pytest.approx(c.k_CS * c.k_CS1 / c.k_CS2)
    m = _mag(w, np.logspace(0, 8, 400))
    assert np.all(np.diff(m) >= -1e-15)
    assert m[-1] / abs(w(0)) == pytest.approx(c.k_CS2 / c.k_CS1, rel=1e-2)
    # corner where |W_CS| reaches 1/sqrt(2) of its asymptote: the pole at k_CS2 w_o
    ww = np.logspace(4, 7, 20001)
    corner = ww[np.argmin(np.abs(_mag(w, ww) - c.k_CS / np.sqrt(2)))]
    assert corner == pytest.approx(c.k_CS2 * W_O, rel=0.02)
    with pytest.raises(WeightError):
        make_w_cs(replace(c, k_CS1=3000.0), W_O)


def test_w_d_harmonic_peaks():
    c = WeightConstants()
    wd = make_w_d(c, W_O)
    for h in (1, 3, 5, 7):
        assert _local_max_near(wd, h * W_O)
    assert _mag(wd, 3 * W_O)[0] / _mag(wd, W_O)[0] < 1
    one = replace(c, k_d1=1.0, k_d3=1.0, k_d5=1.0, k_d7=1.0)
    lp = second_order_lowpass(c.k_d_gain, c.k_d_cutoff)
    w = np.logspace(0, 6, 30)
    assert np.allclose(_mag(make_w_d(one, W_O), w), _mag(lp, w), rtol=1e-12)


def test_weights_stable_minimum_phase(params):
    ws = make_weights(params)
    for sys in (ws.w_s, ws.w_cs, ws.w_d):
        assert is_stable(sys)
        assert np.all(sys.zeros().real < 0)
        assert sys.relative_degree >= 0
    assert ws.w_d.order == 2 + 8


def test_product_matches_factors(params, rng):
    ws = make_weights(params)
    w = 10 ** rng.uniform(0, 6, 100)
    for name in ("w_s", "w_cs", "w_d"):
        direct = np.ones_like(w, dtype=complex)
        for f in ws.factors[name]:
            direct *= freq_response(f, w).value
        expanded = freq_response(getattr(ws, name), w).value
        real = freq_response(ws.realization(name), w).value.reshape(len(w))
        assert np.allclose(expanded, direct, rtol=1e-9)
        assert np.allclose(real, direct, rtol=1e-9)


@settings(max_examples=25, deadline=None)
@given(k=st.floats(1.0, 500.0), zeta=st.floats(1e-3, 0.5))
def test_peak_biquad_stable_min_phase(k, zeta):
    b = peak_biquad(k, zeta, W_O)
    assert np.all(poles(b).real < 0) and np.all(b.zeros().real < 0)
    assert abs(b(1j * W_O)) == pytest.approx(k, rel=1e-9)


def test_weight_validation(params):
    for bad in (dict(zeta=0.0), dict(zeta=1.5), dict(k_S2=0.5), dict(k_d3=0.2)):
        with pytest.raises(WeightError):
            make_weights(params, WeightConstants(**bad))
    with pytest.raises(WeightError):
        WeightConstants.from_dict({"k_S9": 1})
    c = WeightConstants(k_d1=123.0)
    assert WeightConstants.from_dict(c.to_dict()) == c
