"""Sync-grid recovery from sparse beacon clicks and windowed slot tagging.

The beacon runs at 1/100 of the signal rate. Bob's D5 sees only a fraction
of its pulses plus uncorrelated clicks; the grid is rebuilt from the folded
phase of the clicks and then filled across the whole session. Signal clicks
are then given a slot number relative to the preceding grid tick:

    n = floor((t_sig - t_sync + delta_t) / T)
    valid  iff  (t_sig - t_sync + delta_t) mod T <= window

All arithmetic is on integer picoseconds.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .receiver import Detections


class UnrecoverableGridError(RuntimeError):
    """Too few beacon clicks survive to pin down the sync grid."""


@dataclass(frozen=True)
class SyncGrid:
    period_ps: int
    phase_ps: int
    ticks: np.ndarray
    n_accepted: int = 0
    n_rejected: int = 0
    accepted: np.ndarray = field(default=None, repr=False, compare=False)

    def __eq__(self, other):
        if not isinstance(other, SyncGrid):
            return NotImplemented
        return (self.period_ps == other.period_ps and self.phase_ps == other.phase_ps
                and np.array_equal(self.ticks, other.ticks))

    __hash__ = None


def _wrap(x, period):
    """Map residuals into [-period/2, period/2)."""
    return (x + period // 2) % period - period // 2


def recover_sync_grid(d5_events, nominal_period_ps: int = 2_000_000, tolerance_ps: int = 1000,
                      span_ps: tuple[int, int] | None = None, tdc_bin_ps: int = 64) -> SyncGrid:
    """Rebuild the complete beacon grid from sparse, noisy D5 timestamps.

    1. Fold all timestamps modulo the nominal period and histogram them in
       bins of ``tolerance_ps``; the densest pair of adjacent bins holds the
       beacon phase.
    2. Accept clicks within ``tolerance_ps`` of that phase, reject the rest.
    3. Refine the phase as the mean accepted residual, snapped to the TDC bin.
    4. Lay ticks at every period across ``span_ps`` (or across the accepted
       clicks when no span is given).
    """
    t = np.asarray(d5_events, dtype=np.int64)
    period = int(nominal_period_ps)
    tol = int(tolerance_ps)
    if len(t) < 2:
        raise UnrecoverableGridError(f"need at least 2 sync clicks, got {len(t)}")
    folded = t % period
    nbins = -(-period // tol)
    counts = np.bincount(folded // tol, minlength=nbins)
    pair = counts + np.roll(counts, -1)
    centre = ((int(np.argmax(pair)) + 1) * tol) % period

    resid = _wrap(folded - centre, period)
    accepted = np.abs(resid) <= tol
    # recentre once on the accepted cloud so the acceptance band is symmetric
    if accepted.any():
        centre = (centre + int(round(resid[accepted].mean()))) % period
        resid = _wrap(folded - centre, period)
        accepted = np.abs(resid) <= tol
    n_acc = int(accepted.sum())
    if n_acc < 2:
        raise UnrecoverableGridError(f"only {n_acc} sync clicks consistent with a periodic grid")

    phase = centre + float(resid[accepted].mean())
    phase = int(round(phase / tdc_bin_ps)) * tdc_bin_ps % period

    if span_ps is None:
        k = np.rint((t[accepted] - phase) / period).astype(np.int64)
        k_lo, k_hi = int(k.min()), int(k.max())
    else:
        start, end = span_ps
        k_lo = -((phase - start) // period)
        k_hi = (end - 1 - phase) // period
    ticks = phase + period * np.arange(k_lo, k_hi + 1, dtype=np.int64)
    return SyncGrid(period, int(phase), ticks, n_acc, len(t) - n_acc, accepted)


@dataclass
class TaggedEvents:
    """Slot assignment for each input detection (same order as the input)."""

    detections: Detections
    sync_index: np.ndarray
    slot: np.ndarray
    sequence: np.ndarray
    residual_ps: np.ndarray
    valid: np.ndarray
    has_reference: np.ndarray

    def __len__(self) -> int:
        return len(self.valid)

    def select(self, mask) -> "TaggedEvents":
        return TaggedEvents(self.detections.select(mask), self.sync_index[mask], self.slot[mask],
                            self.sequence[mask], self.residual_ps[mask], self.valid[mask],
                            self.has_reference[mask])


def assign_time_tags(signal_events: Detections, grid: SyncGrid, T_ps: int = 20_000,
                     delta_t_ps: int = 2_500, window_ps: int = 5_000) -> TaggedEvents:
    if grid.period_ps % T_ps:
        raise ValueError(f"signal period {T_ps} ps does not divide sync period {grid.period_ps} ps")
    slots_per_sync = grid.period_ps // T_ps
    t = signal_events.timestamp_ps
    k = np.searchsorted(grid.ticks, t, side="right") - 1
    has_ref = k >= 0
    kc = np.clip(k, 0, max(len(grid.ticks) - 1, 0))
    t_sync = grid.ticks[kc] if len(grid.ticks) else np.zeros(len(t), np.int64)
    offset = t - t_sync + delta_t_ps
    n = offset // T_ps
    residual = offset % T_ps
    # clicks more than one period past the final tick have no reference
    has_ref &= (t - t_sync) < grid.period_ps
    valid = has_ref & (residual <= window_ps)
    seq = np.where(has_ref, kc * slots_per_sync + n, -1)
    sync_index = np.where(has_ref, kc + n // slots_per_sync, -1)
    slot = np.where(has_ref, n % slots_per_sync, -1)
    return TaggedEvents(signal_events, sync_index, slot, seq, residual, valid, has_ref)


def resolve_double_clicks(tagged: TaggedEvents, rng: np.random.Generator) -> TaggedEvents:
    """Keep only valid events, one per sequence number: earliest wins, ties at random."""
    valid = tagged.select(tagged.valid)
    n = len(valid)
    if n == 0:
        return valid
    tiebreak = rng.random(n)
    order = np.lexsort((tiebreak, valid.detections.timestamp_ps, valid.sequence))
    seq_o = valid.sequence[order]
    first = np.ones(n, dtype=bool)
    first[1:] = seq_o[1:] != seq_o[:-1]
    keep = np.sort(order[first])
    return valid.select(keep)
