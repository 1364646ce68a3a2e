"""Bob: passive 50:50 basis choice, polarization analysis, five click detectors.

D1..D4 analyse the signal wavelength (D1=H, D2=V, D3=D, D4=A); D5 sees the
520 nm beacon. Each photon reaching the receiver is collected, takes a
random port of the beamsplitter, is routed by the polarization analyser and
fires its detector with the quantum efficiency. The earliest click of a pulse
wins; equal TDC timestamps are broken uniformly at random.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Iterator

import numpy as np

from .transmitter import PS_PER_S, Polarization


class Detector(IntEnum):
    D1 = 1
    D2 = 2
    D3 = 3
    D4 = 4
    D5 = 5


class Origin(IntEnum):
    SIGNAL = 0
    DARK = 1
    BACKGROUND = 2
    SYNC = 3


SIGNAL_DETECTORS = (Detector.D1, Detector.D2, Detector.D3, Detector.D4)
SYNC_DETECTOR = Detector.D5


def detector_for(basis, bit):
    """Detector number that reports ``bit`` in ``basis``."""
    return 1 + 2 * np.asarray(basis) + np.asarray(bit)


def detector_basis(detector):
    return (np.asarray(detector) - 1) >> 1


def detector_bit(detector):
    return (np.asarray(detector) - 1) & 1


@dataclass(frozen=True)
class DetectorConfig:
    qe_450: float = 0.20
    qe_520: float = 0.25
    dark_hz: float = 5.0
    background_hz: float = 100.0
    jitter_sigma_s: float = 250e-12
    tdc_bin_s: float = 64e-12
    collection_efficiency: float = 0.70
    polarization_error: float = 0.0176

    def __post_init__(self):
        for name in ("qe_450", "qe_520", "collection_efficiency", "polarization_error"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be a probability, got {value}")
        for name in ("dark_hz", "background_hz", "jitter_sigma_s"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.tdc_bin_ps < 1:
            raise ValueError("tdc_bin_s must be at least one picosecond")

    @property
    def tdc_bin_ps(self) -> int:
        return int(round(self.tdc_bin_s * PS_PER_S))

    @property
    def jitter_ps(self) -> float:
        return self.jitter_sigma_s * PS_PER_S

    @property
    def click_probability(self) -> float:
        """Chance that one signal photon at the receiver input produces a click."""
        return self.collection_efficiency * self.qe_450

    @property
    def noise_rate_hz(self) -> float:
        """Total uncorrelated click rate over D1..D4."""
        return 4 * self.dark_hz + self.background_hz


@dataclass(frozen=True)
class DetectionRecord:
    detector: Detector
    timestamp_ps: int
    origin: Origin


@dataclass
class Detections:
    """Columnar detection list. ``pulse_index`` is simulator ground truth (-1 for noise)."""

    detector: np.ndarray
    timestamp_ps: np.ndarray
    origin: np.ndarray
    pulse_index: np.ndarray | None = None

    def __post_init__(self):
        self.detector = np.asarray(self.detector, dtype=np.int8)
        self.timestamp_ps = np.asarray(self.timestamp_ps, dtype=np.int64)
        self.origin = np.asarray(self.origin, dtype=np.int8)
        if self.pulse_index is None:
            self.pulse_index = np.full(len(self.detector), -1, dtype=np.int64)
        self.pulse_index = np.asarray(self.pulse_index, dtype=np.int64)
        n = len(self.detector)
        if not (len(self.timestamp_ps) == len(self.origin) == len(self.pulse_index) == n):
            raise ValueError("detection columns differ in length")

    @classmethod
    def empty(cls) -> "Detections":
        return cls(np.zeros(0), np.zeros(0), np.zeros(0))

    @classmethod
    def concat(cls, parts) -> "Detections":
        parts = list(parts)
        if not parts:
            return cls.empty()
        return cls(np.concatenate([p.detector for p in parts]),
                   np.concatenate([p.timestamp_ps for p in parts]),
                   np.concatenate([p.origin for p in parts]),
                   np.concatenate([p.pulse_index for p in parts]))

    def __len__(self) -> int:
        return len(self.detector)

    def __iter__(self) -> Iterator[DetectionRecord]:
        for d, t, o in zip(self.detector, self.timestamp_ps, self.origin):
            yield DetectionRecord(Detector(int(d)), int(t), Origin(int(o)))

    def select(self, mask) -> "Detections":
        return Detections(self.detector[mask], self.timestamp_ps[mask], self.origin[mask],
                          self.pulse_index[mask])

    def sorted(self) -> "Detections":
        """Canonical order: by timestamp, then detector."""
        order = np.lexsort((self.detector, self.timestamp_ps))
        return self.select(order)


def quantize(t_ps, bin_ps: int) -> np.ndarray:
    """Round to the nearest TDC bin."""
    return (np.rint(np.asarray(t_ps, dtype=float) / bin_ps) * bin_ps).astype(np.int64)


def route(polarization, basis, cfg: DetectorConfig, rng: np.random.Generator) -> np.ndarray:
    """Detector hit by photons of ``polarization`` analysed in ``basis``."""
    pol = np.asarray(polarization, dtype=np.int64)
    basis = np.asarray(basis, dtype=np.int64)
    n = pol.shape
    flip = rng.random(n) < cfg.polarization_error
    coin = rng.integers(0, 2, size=n)
    bit = np.where(basis == (pol >> 1), (pol & 1) ^ flip, coin)
    return detector_for(basis, bit).astype(np.int8)


def fire_photons(pulse_rows, polarization, arrival_ps, cfg: DetectorConfig,
                 rng: np.random.Generator, basis=None) -> tuple[np.ndarray, Detections]:
    """Turn clicking photons into one detection per pulse.

    ``pulse_rows`` names the pulse each clicking photon belongs to;
    ``polarization`` and ``arrival_ps`` are per photon. Returns the pulse row of
    each surviving detection together with the detections themselves.
    """
    rows = np.asarray(pulse_rows, dtype=np.int64)
    n = len(rows)
    if basis is None:
        basis = rng.integers(0, 2, size=n)
    else:
        basis = np.broadcast_to(np.asarray(basis, dtype=np.int64), (n,))
    det = route(polarization, basis, cfg, rng)
    t = np.asarray(arrival_ps, dtype=float) + rng.normal(0.0, cfg.jitter_ps, size=n)
    tq = quantize(t, cfg.tdc_bin_ps)
    tiebreak = rng.random(n)
    order = np.lexsort((tiebreak, tq, rows))
    rows_o = rows[order]
    first = np.ones(n, dtype=bool)
    first[1:] = rows_o[1:] != rows_o[:-1]
    keep = order[first]
    return rows[keep], Detections(det[keep], tq[keep], np.full(len(keep), Origin.SIGNAL))


def measure_many(photon_counts, polarization, arrival_ps, cfg: DetectorConfig,
                 rng: np.random.Generator, basis=None) -> tuple[np.ndarray, Detections]:
    """Vectorised :func:`measure` over many pulses (arrival times in picoseconds)."""
    counts = np.asarray(photon_counts, dtype=np.int64)
    if np.any(counts < 0):
        raise ValueError("photon counts must be non-negative")
    clicks = rng.binomial(counts, cfg.click_probability)
    rows = np.repeat(np.arange(len(counts)), clicks)
    pol = np.asarray(polarization)[rows]
    arr = np.asarray(arrival_ps)[rows]
    b = None if basis is None else np.broadcast_to(np.asarray(basis), counts.shape)[rows]
    return fire_photons(rows, pol, arr, cfg, rng, basis=b)


def measure(photon_count: int, pol: Polarization, arrival_s: float, cfg: DetectorConfig,
            rng: np.random.Generator, basis=None) -> DetectionRecord | None:
    """Single-pulse measurement; ``None`` when no detector fires."""
    rows, det = measure_many([photon_count], [int(pol)], [arrival_s * PS_PER_S], cfg, rng, basis=basis)
    if len(rows) == 0:
        return None
    return next(iter(det))


def inject_noise(duration_s: float, cfg: DetectorConfig, rng: np.random.Generator,
                 start_ps: int = 0) -> Detections:
    """Dark counts on each of D1..D4 plus a shared background split evenly over them."""
    if duration_s < 0:
        raise ValueError("duration must be non-negative")
    span = int(round(duration_s * PS_PER_S))
    streams = rng.spawn(5)
    parts = []
    for det, stream in zip(SIGNAL_DETECTORS, streams[:4]):
        n = stream.poisson(cfg.dark_hz * duration_s)
        t = stream.integers(start_ps, start_ps + span, size=n) if span else np.zeros(0, np.int64)
        parts.append(Detections(np.full(n, det), quantize(t, cfg.tdc_bin_ps), np.full(n, Origin.DARK)))
    bg = streams[4]
    n = bg.poisson(cfg.background_hz * duration_s)
    t = bg.integers(start_ps, start_ps + span, size=n) if span else np.zeros(0, np.int64)
    dets = bg.integers(1, 5, size=n)
    parts.append(Detections(dets, quantize(t, cfg.tdc_bin_ps), np.full(n, Origin.BACKGROUND)))
    return Detections.concat(parts)


def measure_fidelity(pol: Polarization, n_trials: int, cfg: DetectorConfig,
                     rng: np.random.Generator) -> float:
    """Fraction of ``n_trials`` detected photons that land on the detector matching ``pol``.

    The analyser is forced into the preparation basis, so this isolates the
    polarization error of the receiver.
    """
    if n_trials <= 0:
        raise ValueError("n_trials must be positive")
    pol = Polarization(pol)
    rows = np.arange(n_trials)
    _, det = fire_photons(rows, np.full(n_trials, int(pol)), np.zeros(n_trials), cfg, rng,
                          basis=int(pol.basis))
    expected = detector_for(int(pol.basis), pol.bit)
    return float(np.mean(det.detector == expected))
