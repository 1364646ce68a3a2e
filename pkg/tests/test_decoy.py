import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from uwqkd.channel import DEFAULT_WATER_TYPES, db_to_transmittance
from uwqkd.decoy import (DecoyBounds, GainStats, ModelGains, accumulate_gains, analytic_gain_model,
                         binary_entropy, bound_single_photon, gllp_rate, model_gains, noise_yield,
                         rate_vs_distance, secrecy_fraction, single_intensity_rate)
from uwqkd.postprocess import final_length_from_rate
from uwqkd.receiver import DetectorConfig
from uwqkd.transmitter import SourceConfig

# 1-photon yield lower bound over eta for an ideal channel (Y0 = 0, Y_k = eta for every k >= 1)
# at mu = 0.9 / 0.3, evaluated with 40-digit arithmetic.
IDEAL_Y1_RATIO = 0.93840342057059904


def _ideal_ratio_oracle(ms, m1):
    ms, m1 = mp.mpf(ms), mp.mpf(m1)
    return float(ms / (ms * m1 - m1**2) * ((1 - mp.e**-m1) * mp.e**m1 - (1 - mp.e**-ms) * mp.e**ms * m1**2 / ms**2))


def test_entropy_examples():
    assert binary_entropy(0.5) == 1.0
    assert binary_entropy(0.0) == 0.0 and binary_entropy(1.0) == 0.0
    x = mp.mpf("0.0248")
    exact = float(-x * mp.log(x, 2) - (1 - x) * mp.log(1 - x, 2))
    assert binary_entropy(0.0248) == pytest.approx(exact, abs=1e-12)
    assert exact == pytest.approx(0.16760, abs=1e-5)
    with pytest.raises(ValueError):
        binary_entropy(1.5)


@given(st.floats(0, 1, allow_nan=False))
def test_entropy_symmetric(x):
    assert abs(binary_entropy(x) - binary_entropy(1 - x)) < 1e-12


def test_secrecy_fraction_clamps():
    assert secrecy_fraction(0.5) == 0.0 and secrecy_fraction(0.7) == 0.0
    assert secrecy_fraction(0.0) == 1.0


def test_ideal_channel_bound_is_below_eta():
    assert _ideal_ratio_oracle(0.9, 0.3) == pytest.approx(IDEAL_Y1_RATIO, rel=1e-15)
    eta = 0.01
    stats = ModelGains(eta * (1 - math.exp(-0.9)), 0.0, eta * (1 - math.exp(-0.3)), 0.0, 0.0)
    b = bound_single_photon(stats, 0.9, 0.3)
    assert b.y1_lower <= eta
    assert b.y1_lower == pytest.approx(IDEAL_Y1_RATIO * eta, rel=1e-12)
    assert b.e1_upper == 0.0


def test_dead_channel_clamps():
    b = bound_single_photon(ModelGains(0.0, 0.5, 0.0, 0.5, 0.0), 0.9, 0.3)
    assert b.y1_lower == 0.0 and b.degenerate and b.e1_upper == 0.5
    with pytest.raises(ValueError):
        bound_single_photon(ModelGains(0.1, 0, 0.1, 0, 0), 0.3, 0.9)


def test_gllp_rate_examples():
    stats = ModelGains(1e-3, 0.0, 5e-4, 0.0, 1e-6)
    assert gllp_rate(stats, DecoyBounds(1e-3, 0.5, 4e-4, 1e-3, False), 0.5) == 0.0
    assert gllp_rate(stats, DecoyBounds(1e-3, 0.0, 4e-4, 1e-3, False), 0.5, 1.16) == pytest.approx(0.5 * 4e-4)
    with pytest.raises(ValueError):
        gllp_rate(stats, DecoyBounds(1e-3, 0.0, 4e-4, 1e-3, False), 0.0)


def test_gllp_monotone_in_errors():
    es = np.linspace(0, 0.2, 41)
    e1s = np.linspace(0, 0.5, 41)
    for e1 in e1s[::8]:
        r = [gllp_rate(ModelGains(1e-3, e, 5e-4, e, 1e-6), DecoyBounds(1e-3, e1, 4e-4, 1e-3, False), 0.5)
             for e in es]
        assert np.all(np.diff(r) <= 0)
    for e in es[::8]:
        r = [gllp_rate(ModelGains(1e-3, e, 5e-4, e, 1e-6), DecoyBounds(1e-3, e1, 4e-4, 1e-3, False), 0.5)
             for e1 in e1s]
        assert np.all(np.diff(r) <= 0)


def test_analytic_gain_model_limits():
    assert analytic_gain_model(0.0, 0.1, 1e-5, 0.02) == (1e-5, 0.5)
    q, e = analytic_gain_model(200.0, 1.0, 1e-5, 0.02)
    assert q == 1.0 and e == pytest.approx(0.02, abs=1e-5)


def test_noise_yield():
    assert noise_yield(DetectorConfig(dark_hz=5, background_hz=100), 5_000) == pytest.approx(6e-7)


def test_frozen_operating_point():
    # 35 dB, default devices: the reference figures used throughout the tests
    g = model_gains(db_to_transmittance(35), DetectorConfig(), SourceConfig())
    assert g.e_signal == pytest.approx(0.024757, abs=1e-6)
    b = bound_single_photon(g, 0.9, 0.3)
    assert gllp_rate(g, b, 0.5) == pytest.approx(1.0552e-6, rel=1e-3)


def test_higher_dark_counts_kill_the_35_db_link():
    g = model_gains(db_to_transmittance(35), DetectorConfig(dark_hz=50.0), SourceConfig())
    assert g.e_signal > 0.03
    assert gllp_rate(g, bound_single_photon(g, 0.9, 0.3), 0.5) == 0.0


def test_single_intensity_estimate_trusts_the_channel():
    g = model_gains(db_to_transmittance(35), DetectorConfig(), SourceConfig())
    assert single_intensity_rate(g, 0.9, 0.5) > 0


def test_gain_stats_tallies():
    s = accumulate_gains([10, 10, 10], [0, 0, 1, 2, 2], [True, False, True, True, True],
                         [True, True, False, False, True])
    assert s.n_detected.tolist() == [2, 1, 2]
    assert s.n_sifted.tolist() == [1, 1, 2]
    assert s.n_error.tolist() == [1, 0, 1]
    assert s.q_signal == 0.2 and s.e_signal == 1.0 and s.y0 == 0.2 and s.e_decoy == 0.0
    both = s + s
    assert both.n_sent.tolist() == [20, 20, 20] and both.q_signal == s.q_signal
    with pytest.raises(ValueError):
        GainStats([1, 1, 1], [2, 0, 0], [0, 0, 0], [0, 0, 0])
    zero = GainStats([10, 10, 10], [0, 0, 0], [0, 0, 0], [0, 0, 0])
    assert zero.y0 == 0.0


def test_final_length_zero_when_phase_error_saturates():
    s = GainStats([10**6] * 3, [1000, 300, 10], [500, 150, 5], [10, 5, 2])
    assert final_length_from_rate(s, DecoyBounds(1e-3, 0.5, 4e-4, 1e-3, False), 0, 500) == 0


def test_rate_curves():
    det, src = DetectorConfig(), SourceConfig()
    cut = {}
    for name, water in DEFAULT_WATER_TYPES.items():
        curve = rate_vs_distance(water, 8.0, det, src, 1.0)
        r = [p.rate_per_pulse for p in curve.points]
        assert np.all(np.diff(r) <= 0) and r[-1] == 0.0
        cut[name] = curve.cutoff_m
    assert cut["JerlovI"] > 345 and cut["JerlovII"] > 120
    assert cut["JerlovI"] > cut["JerlovII"] > cut["JerlovIII_1C"] > cut["Measured"] > cut["JerlovIII_3C"]
    assert 30 < cut["Measured"]


def test_rate_curve_explicit_grid():
    w = DEFAULT_WATER_TYPES["Measured"]
    curve = rate_vs_distance(w, 8.0, DetectorConfig(), SourceConfig(), 1.0, distances=[40, 23, 30])
    assert [p.distance_m for p in curve.points] == [23, 30, 40]
    assert curve.points[0].rate_bps > curve.points[1].rate_bps > 0 == curve.points[2].rate_bps
    with pytest.raises(ValueError):
        rate_vs_distance(w, 8.0, DetectorConfig(), SourceConfig(), 1.0, distances=[])
    with pytest.raises(ValueError):
        rate_vs_distance(w, 8.0, DetectorConfig(), SourceConfig(), 0.0)
