"""Alice: polarization encoding with three intensity classes plus the sync beacon."""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Iterator, Sequence

import numpy as np

PS_PER_S = 10**12


class Basis(IntEnum):
    RECTILINEAR = 0
    DIAGONAL = 1


class Polarization(IntEnum):
    H = 0
    V = 1
    D = 2
    A = 3

    @property
    def basis(self) -> Basis:
        return Basis(self >> 1)

    @property
    def bit(self) -> int:
        return int(self) & 1


class Intensity(IntEnum):
    SIGNAL = 0
    DECOY = 1
    VACUUM = 2


# bit3 bit4 -> intensity class: 11 and 10 signal, 01 decoy, 00 vacuum
_CLASS_OF_LOW_BITS = np.array([Intensity.VACUUM, Intensity.DECOY, Intensity.SIGNAL, Intensity.SIGNAL],
                              dtype=np.int8)


@dataclass(frozen=True)
class SourceConfig:
    repetition_hz: float = 5.0e7
    pulse_width_s: float = 3e-9
    mu_signal: float = 0.9
    mu_decoy: float = 0.3
    mu_vacuum: float = 0.0
    p_signal: float = 0.5
    p_decoy: float = 0.25
    p_vacuum: float = 0.25
    sync_rate_hz: float = 5.0e5

    def __post_init__(self):
        probs = self.class_probabilities
        if min(probs) < 0 or abs(sum(probs) - 1.0) > 1e-12:
            raise ValueError(f"class probabilities must be non-negative and sum to 1, got {probs}")
        if not (self.mu_signal > self.mu_decoy > self.mu_vacuum == 0.0):
            raise ValueError("intensities must satisfy signal > decoy > vacuum = 0")
        period = PS_PER_S / self.repetition_hz
        if abs(period - round(period)) > 1e-6:
            raise ValueError(f"signal period {period} ps is not an integer number of picoseconds")
        ratio = self.repetition_hz / self.sync_rate_hz
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("sync period must be an exact multiple of the signal period")

    @property
    def class_probabilities(self) -> tuple[float, float, float]:
        return (self.p_signal, self.p_decoy, self.p_vacuum)

    @property
    def mus(self) -> np.ndarray:
        return np.array([self.mu_signal, self.mu_decoy, self.mu_vacuum])

    def mu(self, intensity: Intensity) -> float:
        return float(self.mus[int(intensity)])

    @property
    def period_ps(self) -> int:
        return int(round(PS_PER_S / self.repetition_hz))

    @property
    def period_s(self) -> float:
        return 1.0 / self.repetition_hz

    @property
    def slots_per_sync(self) -> int:
        return int(round(self.repetition_hz / self.sync_rate_hz))

    @property
    def sync_period_ps(self) -> int:
        return self.period_ps * self.slots_per_sync

    @property
    def uses_word_encoding(self) -> bool:
        return self.class_probabilities == (0.5, 0.25, 0.25)


@dataclass(frozen=True)
class EmissionRecord:
    index: int
    time_ps: int
    polarization: Polarization
    intensity: Intensity

    @property
    def basis(self) -> Basis:
        return self.polarization.basis

    @property
    def bit(self) -> int:
        return self.polarization.bit

    @property
    def time_s(self) -> float:
        return self.time_ps / PS_PER_S


def _word_value(bits) -> int:
    if isinstance(bits, str):
        bits = [int(c) for c in bits]
    bits = list(bits)
    if len(bits) != 4 or any(b not in (0, 1) for b in bits):
        raise ValueError(f"expected exactly 4 bits, got {bits!r}")
    return bits[0] << 3 | bits[1] << 2 | bits[2] << 1 | bits[3]


def encode_word(bits: Sequence[int] | str) -> tuple[Polarization, Intensity]:
    """Map a 4-bit word to a polarization (bits 1-2) and an intensity (bits 3-4).

    >>> encode_word("0111")
    (<Polarization.V: 1>, <Intensity.SIGNAL: 0>)
    """
    word = _word_value(bits)
    return Polarization(word >> 2), Intensity(int(_CLASS_OF_LOW_BITS[word & 3]))


def decode_words(words: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`encode_word` over integer words 0..15."""
    words = np.asarray(words, dtype=np.int64)
    return (words >> 2).astype(np.int8), _CLASS_OF_LOW_BITS[words & 3]


@dataclass
class PulseTrain:
    """Columnar view of Alice's emissions.

    ``index`` may be a subset of the ``n_pulses`` slots in the session (the
    session engine only materialises slots that can matter to Bob); ``sent``
    always holds the per-class totals over the whole session.
    """

    index: np.ndarray
    polarization: np.ndarray
    intensity: np.ndarray
    period_ps: int
    n_pulses: int
    sent: np.ndarray

    def __post_init__(self):
        self.index = np.asarray(self.index, dtype=np.int64)
        self.polarization = np.asarray(self.polarization, dtype=np.int8)
        self.intensity = np.asarray(self.intensity, dtype=np.int8)
        self.sent = np.asarray(self.sent, dtype=np.int64)
        if not (len(self.index) == len(self.polarization) == len(self.intensity)):
            raise ValueError("pulse train columns differ in length")
        if len(self.index) > 1 and np.any(np.diff(self.index) <= 0):
            raise ValueError("pulse indices must be strictly increasing")
        if self.sent.shape != (3,) or self.sent.sum() != self.n_pulses:
            raise ValueError("per-class sent counts must sum to n_pulses")

    def __len__(self) -> int:
        return len(self.index)

    def __iter__(self) -> Iterator[EmissionRecord]:
        for i in range(len(self)):
            yield self.record(i)

    def __getitem__(self, i: int) -> EmissionRecord:
        return self.record(i)

    def record(self, i: int) -> EmissionRecord:
        idx = int(self.index[i])
        return EmissionRecord(idx, idx * self.period_ps, Polarization(int(self.polarization[i])),
                              Intensity(int(self.intensity[i])))

    @property
    def time_ps(self) -> np.ndarray:
        return self.index * self.period_ps

    @property
    def basis(self) -> np.ndarray:
        return self.polarization >> 1

    @property
    def bit(self) -> np.ndarray:
        return self.polarization & 1

    @property
    def duration_ps(self) -> int:
        return self.n_pulses * self.period_ps

    def locate(self, seq: np.ndarray) -> np.ndarray:
        """Row position of each global sequence number, or -1 if not held."""
        seq = np.asarray(seq, dtype=np.int64)
        pos = np.searchsorted(self.index, seq)
        pos_c = np.minimum(pos, max(len(self.index) - 1, 0))
        hit = (pos < len(self.index)) & (self.index[pos_c] == seq) if len(self.index) else np.zeros(len(seq), bool)
        return np.where(hit, pos_c, -1)


def generate_pulse_train(config: SourceConfig, rng: np.random.Generator, n: int) -> PulseTrain:
    """Emit ``n`` pulses on the ``config.period_ps`` grid, one fresh 4-bit word each."""
    if n < 0:
        raise ValueError("pulse count must be non-negative")
    if config.uses_word_encoding:
        pol, cls = decode_words(rng.integers(0, 16, size=n))
    else:
        pol = rng.integers(0, 4, size=n).astype(np.int8)
        cls = rng.choice(3, size=n, p=config.class_probabilities).astype(np.int8)
    return PulseTrain(np.arange(n, dtype=np.int64), pol, cls, config.period_ps, n,
                      np.bincount(cls, minlength=3))


def generate_sync_train(config: SourceConfig, n_sync: int) -> np.ndarray:
    """Beacon timestamps in integer picoseconds."""
    if n_sync < 0:
        raise ValueError("sync count must be non-negative")
    return np.arange(n_sync, dtype=np.int64) * config.sync_period_ps
