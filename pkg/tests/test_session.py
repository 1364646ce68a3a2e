import math

import numpy as np
import pytest

from uwqkd.adversary import AttackConfig, AttackKind
from uwqkd.config import ExperimentConfig
from uwqkd.pipeline import run_round
from uwqkd.receiver import DetectorConfig, Detector, Origin
from uwqkd.session import _clicks_given_any, simulate_round
from uwqkd.transmitter import Intensity, SourceConfig

CLEAN = DetectorConfig(dark_hz=0.0, background_hz=0.0, polarization_error=0.0)


def _cfg(**kw):
    base = dict(distance_m=5.0, pulses_per_round=2_000_000, rounds=1)
    base.update(kw)
    return ExperimentConfig(**base)


def _dense_detected_photon_numbers(cfg, rng, n):
    """Pulse-by-pulse reference: every slot is drawn and thinned explicitly."""
    src = cfg.source
    cls = rng.choice(3, size=n, p=src.class_probabilities)
    k = rng.poisson(src.mus[cls])
    p = cfg.link().transmittance * cfg.detector.click_probability
    clicked = rng.binomial(k, p) > 0
    return cls[clicked], k[clicked]


def test_sparse_engine_matches_dense_reference():
    cfg = _cfg(detector=CLEAN)
    rounds = [simulate_round(cfg, i) for i in range(10)]
    sparse_k, sparse_cls = [], []
    for r in rounds:
        pos = r.train.locate(r.events.pulse_index[r.events.origin == Origin.SIGNAL])
        sparse_k.append(r.photons[pos])
        sparse_cls.append(r.train.intensity[pos])
    sparse_k = np.concatenate(sparse_k)
    sparse_cls = np.concatenate(sparse_cls)
    dense_cls, dense_k = _dense_detected_photon_numbers(cfg, np.random.default_rng(99), 10 * 2_000_000)
    for c in range(2):
        a, b = sparse_k[sparse_cls == c], dense_k[dense_cls == c]
        se = math.sqrt(1 / len(a) + 1 / len(b))
        assert abs(len(a) - len(b)) < 4 * math.sqrt(len(a) + len(b))
        for kk in (1, 2, 3):
            pa, pb = np.mean(a == kk), np.mean(b == kk)
            assert abs(pa - pb) < 4 * math.sqrt(max(pa * (1 - pa), 1e-4)) * se + 1e-9
    assert not np.any(sparse_cls == Intensity.VACUUM)


def test_round_is_deterministic_and_round_dependent():
    cfg = _cfg()
    a, b, c = simulate_round(cfg, 0), simulate_round(cfg, 0), simulate_round(cfg, 1)
    assert np.array_equal(a.events.timestamp_ps, b.events.timestamp_ps)
    assert np.array_equal(a.events.detector, b.events.detector)
    assert np.array_equal(a.train.index, b.train.index)
    assert not np.array_equal(a.train.index[:50], c.train.index[:50])


def test_single_photon_bookkeeping():
    cfg = _cfg()
    r = simulate_round(cfg, 0)
    src = cfg.source
    expected = cfg.n_pulses * sum(p * m * math.exp(-m) for p, m in zip(src.class_probabilities, src.mus))
    assert abs(r.single_photon_sent - expected) < 4 * math.sqrt(expected)
    assert r.train.sent.sum() == cfg.n_pulses


def test_events_are_sorted_and_on_tdc_grid():
    r = simulate_round(_cfg(), 0)
    t = r.events.timestamp_ps
    assert np.all(np.diff(t) >= 0)
    assert np.all(t % 64 == 0)
    d5 = r.events.detector == Detector.D5
    assert np.all(np.isin(r.events.origin[d5], [Origin.SYNC, Origin.BACKGROUND]))


def test_beacon_detection_fraction():
    r = simulate_round(_cfg(), 0)
    sync = np.sum(r.events.origin == Origin.SYNC)
    n_ticks = len(r.sync_truth)
    assert abs(sync / n_ticks - 0.4) < 4 * math.sqrt(0.24 / n_ticks)


def test_clicks_given_any_is_truncated_binomial():
    rng = np.random.default_rng(5)
    n = np.full(200_000, 3)
    p = np.full(200_000, 0.2)
    c = _clicks_given_any(n, p, rng)
    assert c.min() >= 1 and c.max() <= 3
    pmf = np.array([math.comb(3, j) * 0.2**j * 0.8 ** (3 - j) for j in range(4)])
    expected = pmf[1:] / pmf[1:].sum()
    observed = np.bincount(c, minlength=4)[1:] / len(c)
    assert np.allclose(observed, expected, atol=0.005)


def _intercept_qber(cfg, fraction, mu):
    """Resent single photons click less often than untouched multi-photon pulses."""
    eta = cfg.link().transmittance * cfg.detector.click_probability
    resent = fraction * -math.expm1(-mu) * eta
    direct = (1 - fraction) * -math.expm1(-mu * eta)
    return 0.25 * resent / (resent + direct) if resent + direct else 0.0


@pytest.mark.parametrize("fraction", [0.0, 0.5, 1.0])
def test_intercept_fraction_sets_qber(fraction):
    cfg = _cfg(detector=CLEAN, attack=AttackConfig(AttackKind.INTERCEPT, fraction), pulses_per_round=8_000_000)
    _, res = run_round(cfg, 0)
    expected = _intercept_qber(cfg, fraction, 0.9)
    se = math.sqrt(max(expected * (1 - expected), 0.01) / res.stats.n_sifted[0])
    assert abs(res.stats.e_signal - expected) < 4 * se
    assert abs(res.stats.e_signal - fraction / 4) < 0.01 or fraction == 0.5


def test_no_attack_equals_zero_fraction_intercept():
    plain = simulate_round(_cfg(), 0)
    assert plain.events.detector.dtype == np.int8
    same = simulate_round(_cfg(attack=AttackConfig(AttackKind.NONE)), 0)
    assert np.array_equal(plain.events.timestamp_ps, same.events.timestamp_ps)


def test_pns_keeps_gain_but_breaks_decoy_ratio():
    cfg = _cfg(pulses_per_round=4_000_000)
    _, honest = run_round(cfg, 0)
    _, attacked = run_round(cfg.replace(attack=AttackConfig(AttackKind.PNS)), 0)
    assert attacked.stats.q_signal == pytest.approx(honest.stats.q_signal, rel=0.1)
    assert attacked.stats.q_decoy < 0.6 * honest.stats.q_decoy
    assert attacked.bounds.y1_lower < 0.1 * honest.bounds.y1_lower


def test_vacuum_detections_carry_random_bits():
    cfg = ExperimentConfig(detector=DetectorConfig(dark_hz=200.0, background_hz=2000.0), session_s=2.0)
    sifted = errors = 0
    for i in range(3):
        _, res = run_round(cfg, i)
        sifted += res.stats.n_sifted[Intensity.VACUUM]
        errors += res.stats.n_error[Intensity.VACUUM]
    assert sifted >= 400
    assert abs(errors / sifted - 0.5) < 0.05
