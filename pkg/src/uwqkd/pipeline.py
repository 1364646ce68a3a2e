"""Per-round key distillation: sync, tagging, sifting, reconciliation, decoy bounds, hashing."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .decoy import DecoyBounds, GainStats, bound_single_photon, gllp_rate
from .postprocess import (ReconciliationAbort, correct_errors, estimate_qber, final_length_from_rate,
                          privacy_amplification, sift)
from .receiver import Detections, Detector, detector_basis, detector_bit
from .streams import substream
from .sync import UnrecoverableGridError, assign_time_tags, recover_sync_grid, resolve_double_clicks
from .transmitter import PS_PER_S, PulseTrain

if TYPE_CHECKING:
    from .config import ExperimentConfig
    from .session import RoundData


@dataclass
class GroundTruth:
    """Single-photon yield and error rate seen by the simulator, invisible to Alice and Bob."""

    y1: float
    e1: float
    n_single_sent: int
    n_single_detected: int
    n_single_sifted: int


@dataclass
class RoundResult:
    report: dict
    stats: GainStats | None = None
    bounds: DecoyBounds | None = None
    alice_key: np.ndarray = field(default_factory=lambda: np.zeros(0, np.uint8))
    bob_key: np.ndarray = field(default_factory=lambda: np.zeros(0, np.uint8))
    truth: GroundTruth | None = None

    @property
    def keys_identical(self) -> bool:
        return np.array_equal(self.alice_key, self.bob_key)


def _bounds_dict(bounds: DecoyBounds | None) -> dict:
    if bounds is None:
        return {"y1_lower": 0.0, "e1_upper": 0.5, "q1_lower": 0.0}
    return bounds.as_dict()


def _aborted_report(round_index: int, n_sent: int, reason: str) -> dict:
    return {"round": round_index, "n_sent": n_sent, "n_detected": 0, "n_sifted": 0, "qber": None,
            "leakage": 0, "n_final": 0, "rate_bps": 0.0, "bounds": _bounds_dict(None),
            "aborted": True, "abort_reason": reason}


def analyze_round(cfg: "ExperimentConfig", round_index: int, train: PulseTrain,
                  events: Detections, truth_photons: np.ndarray | None = None,
                  single_photon_sent: int | None = None) -> RoundResult:
    """Distil a key from one round of recorded detections.

    Only detector labels and timestamps are read from ``events``, so a replay
    from exported files reproduces the report exactly. ``truth_photons`` and
    ``single_photon_sent`` enable ground-truth bookkeeping when available.
    """
    src, post, sc = cfg.source, cfg.post, cfg.sync
    duration_s = train.duration_ps / PS_PER_S
    rng = lambda name: substream(cfg.seed, round_index, name)  # noqa: E731

    events = events.sorted()
    is_sync = events.detector == Detector.D5
    try:
        grid = recover_sync_grid(events.timestamp_ps[is_sync], src.sync_period_ps, sc.tolerance_ps,
                                 span_ps=(0, train.duration_ps), tdc_bin_ps=cfg.detector.tdc_bin_ps)
    except UnrecoverableGridError as exc:
        return RoundResult(_aborted_report(round_index, train.n_pulses, str(exc)))

    tagged = assign_time_tags(events.select(~is_sync), grid, src.period_ps, sc.delta_t_ps, sc.window_ps)
    resolved = resolve_double_clicks(tagged, rng("double-clicks"))
    batch = sift(train, resolved)
    stats = batch.class_tallies
    bounds = bound_single_photon(stats, src.mu_signal, src.mu_decoy)
    q = post.sifting_factor if post.sifting_factor is not None else stats.sifting_rate
    q = q if q > 0 else 0.5
    rate = gllp_rate(stats, bounds, q, post.ec_efficiency, clamp=False)

    report = {"round": round_index, "n_sent": train.n_pulses, "n_detected": len(resolved),
              "n_sifted": len(batch), "qber": None, "leakage": 0, "n_final": 0, "rate_bps": 0.0,
              "bounds": bounds.as_dict(), "aborted": False, "abort_reason": ""}

    alice_key = bob_key = np.zeros(0, np.uint8)
    try:
        qber, rest, n_sample = estimate_qber(batch, post.sample_fraction, rng("qber-sample"))
    except ReconciliationAbort as exc:
        report.update(aborted=True, abort_reason=str(exc))
        n_sample = 0
    else:
        report["qber"] = qber
        # a clean sample does not mean a clean key; never size blocks beyond the sample's resolution
        rec = correct_errors(rest.alice_bits, rest.bob_bits, max(qber, 1.0 / n_sample), rng("cascade"),
                             passes=post.ec_passes, abort_threshold=post.abort_qber)
        # sampled bits are public too, but they are dropped from the key rather than hashed away
        report["leakage"] = rec.leakage_bits + n_sample
        report["leakage_ec"] = rec.leakage_bits
        report["errors_corrected"] = rec.errors_corrected
        f_measured = rec.efficiency(len(rest))
        report["f_measured"] = None if np.isnan(f_measured) else f_measured
        if rec.aborted:
            report.update(aborted=True, abort_reason=rec.reason)
        else:
            n_final = final_length_from_rate(stats, bounds, rec.leakage_bits, len(rest))
            if n_final == 0:
                report["abort_reason"] = "no secure key left after error correction and bounds"
            # both parties draw the same public Toeplitz seed
            alice_key = privacy_amplification(rest.alice_bits, n_final, rng("privacy-amplification"))
            bob_key = privacy_amplification(rec.corrected, n_final, rng("privacy-amplification"))
            report["n_final"] = int(n_final)
            report["rate_bps"] = n_final / duration_s
            report["final_keys_identical"] = bool(np.array_equal(alice_key, bob_key))

    report.update({
        "n_qber_sample": n_sample,
        "sifted_rate_bps": len(batch) / duration_s,
        "sifting_rate": stats.sifting_rate,
        "q_signal": stats.q_signal, "e_signal": stats.e_signal,
        "q_decoy": stats.q_decoy, "e_decoy": stats.e_decoy, "y0": stats.y0,
        "gllp_rate_per_pulse": max(rate, 0.0), "gllp_rate_unclamped": rate,
        "gllp_rate_bps": max(rate, 0.0) * stats.n_sent[0] / duration_s,
        "sync_accepted": grid.n_accepted, "sync_rejected": grid.n_rejected,
        "n_invalid_window": int(np.sum(~tagged.valid)),
        "tallies": {"sent": stats.n_sent.tolist(), "detected": stats.n_detected.tolist(),
                    "sifted": stats.n_sifted.tolist(), "errors": stats.n_error.tolist()},
    })

    truth = None
    if truth_photons is not None and single_photon_sent is not None:
        truth = _ground_truth(train, resolved, truth_photons, single_photon_sent)
    return RoundResult(report, stats, bounds, alice_key, bob_key, truth)


def _ground_truth(train: PulseTrain, resolved, photons: np.ndarray, single_sent: int) -> GroundTruth:
    pos = train.locate(resolved.sequence)
    held = pos >= 0
    pos = pos[held]
    det = resolved.detections.detector[held]
    single = photons[pos] == 1
    matched = single & (train.basis[pos] == detector_basis(det))
    errors = matched & (train.bit[pos] != detector_bit(det))
    n_det, n_sift, n_err = int(single.sum()), int(matched.sum()), int(errors.sum())
    return GroundTruth(n_det / single_sent if single_sent else 0.0,
                       n_err / n_sift if n_sift else 0.5, single_sent, n_det, n_sift)


def run_round(cfg: "ExperimentConfig", round_index: int) -> tuple["RoundData", RoundResult]:
    from .session import simulate_round

    data = simulate_round(cfg, round_index)
    result = analyze_round(cfg, round_index, data.train, data.events, data.photons,
                           data.single_photon_sent)
    return data, result


def summarize(reports: list[dict], stats: list[GainStats | None], cfg: "ExperimentConfig") -> dict:
    """Averages and totals across rounds, plus bounds from the pooled tallies."""
    qbers = [r["qber"] for r in reports if r["qber"] is not None]
    duration = sum(r["n_sent"] for r in reports) / cfg.source.repetition_hz
    pooled = None
    for s in stats:
        if s is not None:
            pooled = s if pooled is None else pooled + s
    summary = {
        "rounds": len(reports),
        "rounds_aborted": sum(bool(r["aborted"]) for r in reports),
        "qber": float(np.mean(qbers)) if qbers else None,
        "total_sifted": sum(r["n_sifted"] for r in reports),
        "total_final": sum(r["n_final"] for r in reports),
        "total_leakage": sum(r["leakage"] for r in reports),
        "asymptotic_bounds": True,
        "sifted_rate_bps": sum(r["n_sifted"] for r in reports) / duration if duration else 0.0,
        "final_rate_bps": sum(r["n_final"] for r in reports) / duration if duration else 0.0,
    }
    if pooled is not None:
        bounds = bound_single_photon(pooled, cfg.source.mu_signal, cfg.source.mu_decoy)
        q = cfg.post.sifting_factor if cfg.post.sifting_factor is not None else pooled.sifting_rate
        rate = gllp_rate(pooled, bounds, q if q > 0 else 0.5, cfg.post.ec_efficiency)
        summary.update({
            "sifting_rate": pooled.sifting_rate, "q_signal": pooled.q_signal,
            "e_signal": pooled.e_signal, "q_decoy": pooled.q_decoy, "e_decoy": pooled.e_decoy,
            "y0": pooled.y0, "bounds": bounds.as_dict(), "gllp_rate_per_pulse": rate,
            "gllp_rate_bps": rate * int(pooled.n_sent[0]) / duration if duration else 0.0,
        })
    return summary
