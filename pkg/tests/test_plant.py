import numpy as np
import pytest
from dataclasses import replace
from hypothesis import given, settings, strategies as st

from robust_vsi.lti import dc_gain, freq_response, is_stable, poles
from robust_vsi.plant import (PlantError, PlantParams, build_plant, resonant_frequency, scr)


def test_stiff_corner_realization(params):
    pl = build_plant(params, 0.0, 0.0)
    assert pl.l_t == pytest.approx(0.4e-3)
    assert (pl.ss.n, pl.ss.m, pl.ss.p) == (3, 2, 1)
    assert pl.g_inv.relative_degree == 3


def test_state_space_matches_transfer_functions(params):
    w = np.logspace(0, 6, 50)
    for l_th, r_th in ((0.0, 0.0), (0.53e-3, 0.05), (0.2e-3, 0.01)):
        pl = build_plant(params, l_th, r_th)
        h = freq_response(pl.ss, w).value[:, 0, :]
        assert np.allclose(h[:, 0], freq_response(pl.g_inv, w).value, rtol=1e-8)
        # v_Th enters with a minus sign: i_inv = g_inv v_inv - g_th v_Th
        assert np.allclose(-h[:, 1], freq_response(pl.g_th, w).value, rtol=1e-8)
        assert np.allclose(pl.g_inv.den, pl.g_th.den)


def test_dc_gain_is_total_resistance(params):
    pl = build_plant(params, 0.53e-3, 0.05)
    assert dc_gain(pl.g_inv) == pytest.approx(1.0 / 0.12)


def test_lossless_plant_is_imaginary():
    p = PlantParams(r_f=0.0, r_g=0.0)
    pl = build_plant(p, 0.1e-3, 0.0)
    w = np.array([10.0, 377.0, 5e3, 2e4, 1e5])
    v = freq_response(pl.g_inv, w).value
    assert np.allclose(v.real, 0.0, atol=1e-12 * np.abs(v).max())


@pytest.mark.parametrize("l_th, f_expected", [(0.0, 1949.3), (0.53e-3, 1412.4)])
def test_resonance_values(params, l_th, f_expected):
    assert resonant_frequency(params, l_th) == pytest.approx(f_expected, abs=0.1)


def test_resonance_symmetric_case():
    p = PlantParams(l_f=1e-3, l_g=1e-3)
    assert resonant_frequency(p, 0.0) == pytest.approx(np.sqrt(2 / (1e-3 * p.c_f)) / (2 * np.pi))


def test_resonance_monotone(params):
    f = [resonant_frequency(params, l) for l in np.linspace(0, 0.53e-3, 30)]
    assert np.all(np.diff(f) < 0)


def test_resonant_peak_location(params):
    pl = build_plant(params, 0.2e-3, 0.02)
    w = 2 * np.pi * np.linspace(1000, 3000, 20001)
    peak = w[np.argmax(np.abs(freq_response(pl.g_inv, w).value))] / (2 * np.pi)
    assert peak == pytest.approx(resonant_frequency(params, 0.2e-3), rel=0.01)


@settings(max_examples=30, deadline=None)
@given(l_th=st.floats(0, 2e-3), r_th=st.floats(1e-4, 0.5), r_f=st.floats(1e-4, 0.5))
def test_passive_plant_is_stable(l_th, r_th, r_f):
    pl = build_plant(replace(PlantParams(), r_f=r_f), l_th, r_th)
    assert is_stable(pl.ss) and np.all(poles(pl.g_inv).real < 0)


def test_scr_values(params):
    assert scr(params, 0.53e-3, 0.05) == pytest.approx(25.42, abs=0.01)
    l3 = params.v_rms ** 2 / (3 * params.s_rated) / params.omega_o
    assert scr(params, l3, 0.0) == pytest.approx(3.0)
    big = replace(params, s_rated=2 * params.s_rated)
    assert scr(big, 0.53e-3, 0.05) == pytest.approx(scr(params, 0.53e-3, 0.05) / 2)
    with pytest.raises(PlantError, match="stiff"):
        scr(params, 0.0, 0.0)


def test_rated_quantities(params):
    assert params.p_rated == pytest.approx(10450.0)
    assert params.q_rated == pytest.approx(3434.7, abs=0.1)
    assert params.i_rated_peak == pytest.approx(64.82, abs=0.01)


def test_parameter_validation(params):
    with pytest.raises(PlantError):
        PlantParams(l_f=0.0)
    with pytest.raises(PlantError):
        PlantParams(r_g=-1.0)
    with pytest.raises(PlantError):
        PlantParams(l_th_min=1e-3, l_th_max=0.5e-3)
    with pytest.raises(PlantError):
        PlantParams(f_sw=500.0)
    with pytest.raises(PlantError):
        build_plant(params, -1e-3, 0.0)
    with pytest.raises(PlantError):
        PlantParams.from_dict({"bogus": 1})
    assert PlantParams.from_dict(params.to_dict()) == params
