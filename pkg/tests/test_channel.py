import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from slicealloc.channel import (
    LinkParams,
    dbm_to_w,
    noise_power_w,
    path_loss_inf_dl,
    path_loss_inf_los,
    path_loss_inf_sl,
    path_loss_nlos,
    sample_channel,
    w_to_dbm,
)

distances = st.floats(1.0, 100.0)
freqs = st.floats(0.5, 100.0)


def test_dense_clutter_loss_values():
    assert path_loss_inf_dl(1.0, 1.0) == pytest.approx(18.6, abs=1e-12)
    assert path_loss_inf_dl(100.0, 3.7) == pytest.approx(101.36, abs=0.01)
    assert path_loss_inf_dl(10.0, 3.7) == pytest.approx(65.66, abs=0.01)
    # 18.6 + 71.4 + 20 log10(3.7)
    assert path_loss_inf_dl(100.0, 3.7) == pytest.approx(101.3640344813, abs=1e-9)


def test_component_models_at_cell_edge():
    assert path_loss_inf_los(100.0, 3.7) == pytest.approx(85.6358327573, abs=1e-9)
    assert path_loss_inf_sl(100.0, 3.7) == pytest.approx(95.3640344813, abs=1e-9)
    assert path_loss_nlos(100.0, 3.7) == pytest.approx(101.3640344813, abs=1e-9)


def test_sparse_clutter_dominates_at_one_metre():
    # 18.6 (DL) < 31.84 (LOS) < 33 (SL)
    assert path_loss_nlos(1.0, 1.0) == pytest.approx(33.0)


@pytest.mark.parametrize("fn", [path_loss_inf_dl, path_loss_nlos])
@pytest.mark.parametrize("d", [0.5, 100.5, -1.0, math.nan])
def test_distance_outside_model_range_rejected(fn, d):
    with pytest.raises(ValueError):
        fn(d, 3.7)


def test_nonpositive_frequency_rejected():
    with pytest.raises(ValueError):
        path_loss_inf_dl(10.0, 0.0)


@given(distances, freqs)
def test_nlos_dominates_each_component(d, f):
    nlos = path_loss_nlos(d, f)
    assert nlos >= path_loss_inf_dl(d, f)
    assert nlos >= path_loss_inf_los(d, f)
    assert nlos >= path_loss_inf_sl(d, f)


@given(st.floats(1.0, 99.0), freqs)
def test_loss_increases_with_distance(d, f):
    assert path_loss_nlos(d + 1.0, f) > path_loss_nlos(d, f)


def test_loss_increases_from_50_to_100_m():
    assert path_loss_nlos(100.0, 3.7) > path_loss_nlos(50.0, 3.7)


def test_vectorised_evaluation_matches_scalar():
    d = np.array([1.0, 7.5, 42.0, 100.0])
    vec = path_loss_nlos(d, 3.7)
    assert np.allclose(vec, [path_loss_nlos(x, 3.7) for x in d])


def test_noise_power_per_subchannel():
    # -174 dBm/Hz over 180 kHz = -121.447 dBm
    p = LinkParams()
    assert w_to_dbm(noise_power_w(p)) == pytest.approx(-121.4472749, abs=1e-6)
    assert noise_power_w(p) == pytest.approx(7.165929e-16, rel=1e-6)


def test_interference_margin_raises_noise():
    base = noise_power_w(LinkParams())
    assert noise_power_w(LinkParams(interference_margin_db=3.0)) == pytest.approx(
        base * 10 ** 0.3
    )


def test_dbm_round_trip():
    assert dbm_to_w(23.0) == pytest.approx(0.19952623, rel=1e-8)
    assert w_to_dbm(dbm_to_w(-7.3)) == pytest.approx(-7.3)
    assert w_to_dbm(0.0) == -math.inf


@pytest.mark.parametrize(
    "kw",
    [
        {"carrier_freq_ghz": 0.0},
        {"subchannel_bw_hz": -1.0},
        {"num_subchannels": 0},
        {"num_subchannels": 2.5},
        {"cell_radius_m": 0.5},
        {"shadow_sigma_db": -1.0},
    ],
)
def test_link_params_validation(kw):
    with pytest.raises(ValueError):
        LinkParams(**kw)


def test_deterministic_part_without_shadowing_or_fading():
    p = LinkParams(num_subchannels=5)
    ch = sample_channel(p, [10.0, 80.0], 7, shadowing=False, fading=False)
    assert ch.gains.shape == (2, 5)
    for i, d in enumerate([10.0, 80.0]):
        assert np.all(ch.gains[i] == ch.gains[i, 0])
        assert ch.gains[i, 0] == pytest.approx(10 ** (-path_loss_nlos(d, 3.7) / 10))
    # the seed is irrelevant once both random terms are off
    other = sample_channel(p, [10.0, 80.0], 99, shadowing=False, fading=False)
    assert np.array_equal(ch.gains, other.gains)


def test_antenna_gains_enter_link_budget():
    p = LinkParams(num_subchannels=1, tx_antenna_gain_dbi=3.0, rx_antenna_gain_dbi=2.0)
    g = sample_channel(p, [20.0], 0, shadowing=False, fading=False).gains[0, 0]
    assert g == pytest.approx(10 ** (-(path_loss_nlos(20.0, 3.7) - 5.0) / 10))


def test_same_seed_same_gains():
    p = LinkParams()
    a = sample_channel(p, [3.0, 50.0, 99.0], [4, 1, 17])
    b = sample_channel(p, [3.0, 50.0, 99.0], [4, 1, 17])
    assert np.array_equal(a.gains, b.gains)
    c = sample_channel(p, [3.0, 50.0, 99.0], [4, 1, 18])
    assert not np.array_equal(a.gains, c.gains)


def test_gains_positive_and_finite():
    ch = sample_channel(LinkParams(), np.linspace(1, 100, 20), 3)
    assert np.all(np.isfinite(ch.gains)) and np.all(ch.gains > 0)
    assert ch.num_users == 20 and ch.num_subchannels == 133


def test_rayleigh_power_term_has_unit_mean():
    # 10^6 draws of the fading term alone
    p = LinkParams(num_subchannels=10_000)
    ch = sample_channel(p, [50.0] * 100, 11, shadowing=False)
    base = sample_channel(p, [50.0], 11, shadowing=False, fading=False).gains[0, 0]
    assert np.mean(ch.gains / base) == pytest.approx(1.0, abs=0.01)


def test_shadowing_is_per_user_and_has_configured_spread():
    p = LinkParams(num_subchannels=1)
    d = [50.0] * 20000
    ch = sample_channel(p, d, 5, fading=False)
    base = 10 ** (-path_loss_nlos(50.0, 3.7) / 10)
    sf_db = -10 * np.log10(ch.gains[:, 0] / base)
    assert np.mean(sf_db) == pytest.approx(0.0, abs=0.15)
    assert np.std(sf_db) == pytest.approx(7.2, rel=0.02)


def test_empty_user_list():
    ch = sample_channel(LinkParams(num_subchannels=4), [], 0)
    assert ch.gains.shape == (0, 4)


def test_distance_beyond_radius_rejected():
    with pytest.raises(ValueError):
        sample_channel(LinkParams(cell_radius_m=50.0), [60.0], 0)
