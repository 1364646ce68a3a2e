"""Sparse, exact Monte-Carlo of one key-distribution round.

A 10 s round at 50 MHz is 5e8 pulses of which only ~1e4 ever click, so the
engine never walks the full train. Pulses are i.i.d., which allows an exact
factorisation:

* class totals are multinomial and the number of clicking pulses per class
  is binomial with the closed-form click probability of that class;
* clicking slots are a uniform random subset of the session;
* the photon number and detector outcome of a clicking pulse are drawn from
  their distribution conditioned on a click;
* slots hit only by uncorrelated noise get a class and photon number drawn
  conditioned on *not* clicking;
* every other slot only contributes to aggregate counts.

The result is distributed exactly as a pulse-by-pulse simulation (up to a
Poisson tail cut at 1e-17) while touching only the slots Bob can see.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.stats import poisson

from .adversary import AttackBranch, attack_branches, eve_measurement, photon_number_cutoff
from .receiver import Detections, Detector, Origin, fire_photons, inject_noise, quantize
from .streams import substream
from .transmitter import PS_PER_S, PulseTrain

if TYPE_CHECKING:
    from .config import ExperimentConfig


@dataclass
class RoundData:
    """Everything one simulated round hands to the analysis, plus hidden truth.

    ``train`` holds only the slots that clicked or can be hit by noise;
    ``photons`` is the emitted photon number of each of those rows and
    ``single_photon_sent`` counts one-photon pulses over the whole round.
    """

    round_index: int
    train: PulseTrain
    events: Detections
    photons: np.ndarray
    single_photon_sent: int
    sync_truth: np.ndarray


@dataclass
class _ClassModel:
    fire: np.ndarray      # [branch, k] joint probability of taking branch, emitting k, clicking
    miss: np.ndarray      # [branch, k] joint probability of taking branch, emitting k, no click
    click: np.ndarray     # per-branch click probability of a forwarded photon
    branches: list[AttackBranch]

    @property
    def p_fire(self) -> float:
        return float(self.fire.sum())


def _class_model(mu: float, branches: list[AttackBranch], click_probability: float) -> _ClassModel:
    k = np.arange(photon_number_cutoff(mu) + 1)
    pk = poisson.pmf(k, mu) if mu > 0 else np.array([1.0])
    fire = np.zeros((len(branches), len(k)))
    miss = np.zeros_like(fire)
    clicks = np.array([b.transmittance * click_probability for b in branches])
    for i, (b, p) in enumerate(zip(branches, clicks)):
        n = b.forwarded(k)
        # 1 - (1-p)^n without cancellation for tiny p
        p_click = -np.expm1(n * np.log1p(-p)) if p < 1 else (n > 0).astype(float)
        fire[i] = b.weight * pk * p_click
        miss[i] = b.weight * pk * (1.0 - p_click)
    return _ClassModel(fire, miss, clicks, branches)


def _draw_joint(table: np.ndarray, size: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    flat = table.ravel()
    total = flat.sum()
    if size == 0 or total <= 0:
        return np.zeros(size, np.int64), np.zeros(size, np.int64)
    cell = rng.choice(len(flat), size=size, p=flat / total)
    return np.divmod(cell, table.shape[1])


def _clicks_given_any(n: np.ndarray, p: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Binomial(n, p) conditioned on at least one success.

    The first success sits at a truncated-geometric position J; the
    remaining n - J trials are unconstrained.
    """
    n = np.asarray(n, dtype=np.int64)
    p = np.asarray(p, dtype=float)
    u = rng.random(len(n))
    log_q = np.log1p(-np.minimum(p, 1 - 1e-16))
    p_any = -np.expm1(n * log_q)
    first = np.ceil(np.log1p(-u * p_any) / log_q).astype(np.int64)
    first = np.clip(first, 1, n)
    return 1 + rng.binomial(n - first, p)


def simulate_round(cfg: "ExperimentConfig", round_index: int) -> RoundData:
    src, det = cfg.source, cfg.detector
    N = cfg.n_pulses
    period = src.period_ps
    duration_ps = N * period
    eta = cfg.link().transmittance
    click = det.click_probability
    branches = attack_branches(cfg.attack, eta, src.mu_signal, click)
    models = [_class_model(mu, branches, click) for mu in src.mus]

    stream = lambda name: substream(cfg.seed, round_index, name)  # noqa: E731
    rng_cls = stream("classes")

    sent = rng_cls.multinomial(N, src.class_probabilities)
    fired_per_class = np.array([rng_cls.binomial(n, m.p_fire) for n, m in zip(sent, models)])

    # uncorrelated clicks on D1..D4 and the slots they can be tagged into
    noise = inject_noise(duration_ps / PS_PER_S, det, stream("noise"))
    offset = noise.timestamp_ps + cfg.sync.delta_t_ps
    noise_slot = offset // period
    in_window = (offset % period <= cfg.sync.window_ps) & (noise_slot >= 0) & (noise_slot < N)

    rng_pos = stream("positions")
    F = int(fired_per_class.sum())
    fired_idx = np.sort(rng_pos.choice(N, size=F, replace=False)) if F else np.zeros(0, np.int64)
    fired_cls = rng_pos.permutation(np.repeat(np.arange(3), fired_per_class))

    candidate = np.unique(noise_slot[in_window])
    noise_only = np.setdiff1d(candidate, fired_idx, assume_unique=True)
    H = len(noise_only)
    pool = sent - fired_per_class
    h_per_class = rng_pos.multivariate_hypergeometric(pool, H, method="marginals") if H else np.zeros(3, np.int64)
    noise_cls = rng_pos.permutation(np.repeat(np.arange(3), h_per_class))

    # photon numbers and attack branch, conditioned on click / no click
    rng_ph = stream("photons")
    fired_k = np.zeros(F, np.int64)
    fired_branch = np.zeros(F, np.int64)
    for c, m in enumerate(models):
        sel = np.flatnonzero(fired_cls == c)
        fired_branch[sel], fired_k[sel] = _draw_joint(m.fire, len(sel), rng_ph)
    noise_k = np.zeros(H, np.int64)
    for c, m in enumerate(models):
        sel = np.flatnonzero(noise_cls == c)
        _, noise_k[sel] = _draw_joint(m.miss, len(sel), rng_ph)

    single_rest = 0
    for c, m in enumerate(models):
        rest = int(pool[c] - h_per_class[c])
        miss_total = m.miss.sum()
        p1 = m.miss[:, 1].sum() / miss_total if m.miss.shape[1] > 1 and miss_total > 0 else 0.0
        single_rest += int(rng_ph.binomial(rest, min(p1, 1.0)))

    # assemble Alice's materialised slots
    index = np.concatenate([fired_idx, noise_only])
    cls = np.concatenate([fired_cls, noise_cls]).astype(np.int8)
    k_all = np.concatenate([fired_k, noise_k])
    fired_flag = np.concatenate([np.ones(F, bool), np.zeros(H, bool)])
    row_order = np.argsort(index, kind="stable")
    index, cls, k_all, fired_flag = index[row_order], cls[row_order], k_all[row_order], fired_flag[row_order]
    pol = stream("polarization").integers(0, 4, size=len(index)).astype(np.int8)
    train = PulseTrain(index, pol, cls, period, N, sent)
    single_photon_sent = int(np.sum(k_all == 1)) + single_rest

    # what reaches Bob from the clicking slots
    fired_rows = np.flatnonzero(fired_flag)
    branch_of_row = np.zeros(len(index), np.int64)
    branch_of_row[np.searchsorted(index, fired_idx)] = fired_branch
    rng_rx = stream("receiver")
    kinds = np.array([b.kind for b in branches])
    b_rows = branch_of_row[fired_rows]
    bob_pol = pol[fired_rows].astype(np.int64)
    resend = kinds[b_rows] == "resend"
    if resend.any():
        bob_pol[resend] = eve_measurement(bob_pol[resend], stream("eve"))
    n_fwd = np.zeros(len(fired_rows), np.int64)
    for i, b in enumerate(branches):
        sel = b_rows == i
        n_fwd[sel] = b.forwarded(k_all[fired_rows][sel])
    clicks = _clicks_given_any(n_fwd, models[0].click[b_rows], rng_rx)
    photon_row = np.repeat(np.arange(len(fired_rows)), clicks)
    scale = 1.0 + cfg.sync.clock_ppm * 1e-6
    arrival = index[fired_rows][photon_row].astype(float) * period * scale
    rows, signal = fire_photons(photon_row, bob_pol[photon_row], arrival, det, rng_rx)
    signal.pulse_index = index[fired_rows][rows]

    # beacon on D5
    rng_sync = stream("sync")
    n_sync = -(-N // src.slots_per_sync)
    ticks = np.arange(n_sync, dtype=np.int64) * src.sync_period_ps
    seen = rng_sync.random(n_sync) < cfg.sync.detect_prob
    t_sync = quantize(ticks[seen] * scale + rng_sync.normal(0.0, det.jitter_ps, int(seen.sum())), det.tdc_bin_ps)
    n_sync_noise = rng_sync.poisson(cfg.sync.noise_hz * duration_ps / PS_PER_S)
    t_sync_noise = quantize(rng_sync.integers(0, max(duration_ps, 1), size=n_sync_noise), det.tdc_bin_ps)
    beacon = Detections(np.full(len(t_sync) + n_sync_noise, Detector.D5),
                        np.concatenate([t_sync, t_sync_noise]),
                        np.concatenate([np.full(len(t_sync), Origin.SYNC),
                                        np.full(n_sync_noise, Origin.BACKGROUND)]))

    events = Detections.concat([signal, noise, beacon]).sorted()
    return RoundData(round_index, train, events, k_all, single_photon_sent, ticks)
