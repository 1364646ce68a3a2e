import numpy as np

from uwqkd.config import ExperimentConfig
from uwqkd.pipeline import analyze_round, run_round, summarize
from uwqkd.receiver import Detections
from uwqkd.streams import substream
from uwqkd.transmitter import Intensity


def test_honest_round_report(short_cfg):
    data, res = run_round(short_cfg, 0)
    r = res.report
    assert not r["aborted"] and res.keys_identical and r["final_keys_identical"]
    assert 0 < r["n_final"] <= r["n_sifted"] - r["n_qber_sample"] <= r["n_sifted"] <= r["n_detected"]
    # hashed input exceeds the output by at least the disclosed parities plus a safety margin
    assert (r["n_sifted"] - r["n_qber_sample"]) - r["n_final"] >= r["leakage_ec"] + 32
    assert r["leakage"] == r["leakage_ec"] + r["n_qber_sample"]
    assert r["rate_bps"] == r["n_final"] / short_cfg.session_s
    assert 0.01 < r["qber"] < 0.05 and 0.45 < r["sifting_rate"] < 0.55


def test_key_bits_come_from_signal_pulses_only(short_cfg):
    data, res = run_round(short_cfg, 1)
    sig = data.events.pulse_index >= 0
    assert np.all(data.train.intensity[data.train.locate(data.events.pulse_index[sig])] <= Intensity.VACUUM)
    # every sifted key index is a signal-class slot
    assert res.stats.n_sifted[0] == res.report["n_sifted"]


def test_ground_truth_recorded(short_cfg):
    _, res = run_round(short_cfg, 0)
    t = res.truth
    assert t.n_single_sent > 0 and 0 < t.y1 < 1e-3
    assert t.n_single_sifted <= t.n_single_detected


def test_round_without_sync_is_aborted(short_cfg):
    data, _ = run_round(short_cfg, 0)
    no_sync = data.events.select(data.events.detector != 5)
    res = analyze_round(short_cfg, 0, data.train, no_sync)
    assert res.report["aborted"] and "sync" in res.report["abort_reason"]


def test_round_without_detections(short_cfg):
    data, _ = run_round(short_cfg, 0)
    only_sync = data.events.select(data.events.detector == 5)
    res = analyze_round(short_cfg, 0, data.train, only_sync)
    assert res.report["aborted"] and res.report["n_final"] == 0


def test_summary_pools_rounds(short_cfg):
    results = [run_round(short_cfg, i)[1] for i in range(2)]
    s = summarize([r.report for r in results], [r.stats for r in results], short_cfg)
    assert s["rounds"] == 2 and s["total_sifted"] == sum(r.report["n_sifted"] for r in results)
    assert s["final_rate_bps"] == s["total_final"] / 20.0


def test_substreams_are_independent_of_order():
    a = substream(1, 0, "noise").random(3)
    substream(1, 0, "classes").random(100)
    assert np.array_equal(a, substream(1, 0, "noise").random(3))
    assert not np.array_equal(a, substream(1, 1, "noise").random(3))
    assert not np.array_equal(a, substream(2, 0, "noise").random(3))
