"""Classical post-processing: sifting, error estimation, reconciliation,
verification and privacy amplification."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import oaconvolve

from .decoy import DecoyBounds, GainStats, accumulate_gains, binary_entropy, secrecy_fraction
from .receiver import detector_basis, detector_bit
from .sync import TaggedEvents
from .transmitter import Intensity, PulseTrain

QBER_ABORT_THRESHOLD = 0.11
VERIFICATION_BITS = 64
_HASH_PRIME = (1 << 64) - 59
_HASH_WORD = 32


class ReconciliationAbort(Exception):
    """Protocol-level abort: the round yields no key."""


@dataclass
class SiftedBatch:
    pulse_indices: np.ndarray
    alice_bits: np.ndarray
    bob_bits: np.ndarray
    class_tallies: GainStats
    n_detected: int
    n_unmatched: int = 0

    def __len__(self) -> int:
        return len(self.alice_bits)

    @property
    def sifting_rate(self) -> float:
        return self.class_tallies.sifting_rate

    def subset(self, keep) -> "SiftedBatch":
        return SiftedBatch(self.pulse_indices[keep], self.alice_bits[keep], self.bob_bits[keep],
                           self.class_tallies, self.n_detected, self.n_unmatched)


def sift(emissions: PulseTrain, tagged: TaggedEvents) -> SiftedBatch:
    """Basis sifting on resolved, valid detections.

    Decoy and vacuum detections only feed the class tallies; the key
    material is the basis-matched signal-class bits.
    """
    pos = emissions.locate(tagged.sequence)
    known = pos >= 0
    pos = pos[known]
    det = tagged.detections.detector[known]
    seq = tagged.sequence[known]
    cls = emissions.intensity[pos]
    a_basis = emissions.basis[pos]
    a_bit = emissions.bit[pos]
    b_basis = detector_basis(det)
    b_bit = detector_bit(det)
    matched = a_basis == b_basis
    errors = matched & (a_bit != b_bit)
    tallies = accumulate_gains(emissions.sent, cls, matched, errors)
    key = matched & (cls == Intensity.SIGNAL)
    return SiftedBatch(seq[key], a_bit[key].astype(np.uint8), b_bit[key].astype(np.uint8),
                       tallies, int(known.sum()), int((~known).sum()))


def estimate_qber(batch: SiftedBatch, sample_fraction: float,
                  rng: np.random.Generator) -> tuple[float, SiftedBatch, int]:
    """Disclose a random sample, return its error fraction and the undisclosed rest."""
    if not 0.0 < sample_fraction < 1.0:
        raise ValueError("sample_fraction must lie strictly between 0 and 1")
    n = len(batch)
    m = int(math.ceil(sample_fraction * n))
    if m == 0:
        raise ReconciliationAbort("sifted batch too small to sample")
    chosen = np.zeros(n, dtype=bool)
    chosen[rng.choice(n, size=m, replace=False)] = True
    qber = float(np.mean(batch.alice_bits[chosen] != batch.bob_bits[chosen]))
    return qber, batch.subset(~chosen), m


def polynomial_hash(bits: np.ndarray, key: int) -> int:
    """64-bit tag: the key evaluated on the bit string packed into 32-bit words, mod a 64-bit prime."""
    bits = np.asarray(bits, dtype=np.uint8)
    pad = (-len(bits)) % _HASH_WORD
    words = np.packbits(np.concatenate([bits, np.zeros(pad, np.uint8)])).view(">u4")
    acc = len(bits) % _HASH_PRIME
    for w in words.tolist():
        acc = (acc * key + w + 1) % _HASH_PRIME
    return acc


@dataclass
class Reconciliation:
    corrected: np.ndarray
    leakage_bits: int
    errors_corrected: int
    passes: int
    verified: bool
    aborted: bool
    reason: str = ""

    def efficiency(self, n: int) -> float:
        """Disclosed parities over the Shannon limit for the error rate actually corrected."""
        if n == 0 or self.errors_corrected == 0:
            return float("nan")
        return self.leakage_bits / (binary_entropy(self.errors_corrected / n) * n)


class _Cascade:
    """Two-party Cascade run in one thread; Alice's parities are the only disclosures."""

    def __init__(self, alice: np.ndarray, bob: np.ndarray):
        self.alice = alice.astype(np.uint8)
        self.bob = bob.astype(np.uint8).copy()
        self.n = len(alice)
        self.leaked = 0
        self.flips = 0
        self.block_of: list[np.ndarray] = []
        self.members: list[list[np.ndarray]] = []
        self.alice_parity: list[np.ndarray] = []
        self.bob_parity: list[np.ndarray] = []

    def add_pass(self, order: np.ndarray, block: int) -> None:
        nblocks = -(-self.n // block)
        block_of = np.empty(self.n, dtype=np.int64)
        block_of[order] = np.arange(self.n) // block
        members = [order[i * block:(i + 1) * block] for i in range(nblocks)]
        a_par = np.array([int(self.alice[m].sum() & 1) for m in members], dtype=np.uint8)
        b_par = np.array([int(self.bob[m].sum() & 1) for m in members], dtype=np.uint8)
        self.leaked += nblocks
        self.block_of.append(block_of)
        self.members.append(members)
        self.alice_parity.append(a_par)
        self.bob_parity.append(b_par)
        odd = [(len(members[b]), len(self.members) - 1, b) for b in np.flatnonzero(a_par != b_par)]
        self._correct(odd)

    def _bisect(self, idx: np.ndarray) -> int:
        while len(idx) > 1:
            half = len(idx) // 2
            left = idx[:half]
            self.leaked += 1
            if (int(self.alice[left].sum()) ^ int(self.bob[left].sum())) & 1:
                idx = left
            else:
                idx = idx[half:]
        return int(idx[0])

    def _correct(self, odd: list[tuple[int, int, int]]) -> None:
        pending = sorted(odd)
        while pending:
            _, p, b = pending.pop(0)
            if self.alice_parity[p][b] == self.bob_parity[p][b]:
                continue
            bit = self._bisect(self.members[p][b])
            self.bob[bit] ^= 1
            self.flips += 1
            for q in range(len(self.members)):
                blk = self.block_of[q][bit]
                self.bob_parity[q][blk] ^= 1
                if self.alice_parity[q][blk] != self.bob_parity[q][blk]:
                    pending.append((len(self.members[q][blk]), q, int(blk)))
            pending.sort()


def correct_errors(alice_bits, bob_bits, qber_estimate: float, rng: np.random.Generator,
                   passes: int = 4, abort_threshold: float = QBER_ABORT_THRESHOLD) -> Reconciliation:
    """Cascade reconciliation followed by hash verification.

    The first block size is ceil(0.73 / qber) and doubles every pass; the key
    is reshuffled between passes. Bob's string is corrected towards Alice's.
    """
    alice = np.asarray(alice_bits, dtype=np.uint8)
    bob = np.asarray(bob_bits, dtype=np.uint8)
    if len(alice) != len(bob):
        raise ValueError("Alice and Bob strings differ in length")
    n = len(alice)
    if qber_estimate >= abort_threshold:
        return Reconciliation(bob.copy(), 0, 0, 0, False, True,
                              f"estimated QBER {qber_estimate:.4f} at or above {abort_threshold}")
    if n == 0:
        return Reconciliation(bob.copy(), 0, 0, 0, True, False)
    block = n if qber_estimate <= 0 else min(n, max(2, math.ceil(0.73 / qber_estimate)))
    cascade = _Cascade(alice, bob)
    for p in range(passes):
        order = np.arange(n) if p == 0 else rng.permutation(n)
        cascade.add_pass(order, min(n, block * 2**p))
    key = int(rng.integers(1, _HASH_PRIME - 1, dtype=np.uint64))
    verified = polynomial_hash(alice, key) == polynomial_hash(cascade.bob, key)
    return Reconciliation(cascade.bob, cascade.leaked, cascade.flips, passes, verified, not verified,
                          "" if verified else "verification hash mismatch after reconciliation")


def toeplitz_hash(bits: np.ndarray, final_length: int, seed_bits: np.ndarray) -> np.ndarray:
    """Multiply ``bits`` by the binary Toeplitz matrix whose diagonals are ``seed_bits``.

    Row i, column j of the matrix is ``seed_bits[i - j + n - 1]``, so the
    product is a slice of the full convolution of the seed with the input.
    """
    bits = np.asarray(bits, dtype=np.uint8)
    n = len(bits)
    if len(seed_bits) != n + final_length - 1:
        raise ValueError("Toeplitz seed must have n + m - 1 bits")
    conv = oaconvolve(np.asarray(seed_bits, dtype=float), bits.astype(float))
    prod = np.rint(conv[n - 1:n - 1 + final_length]).astype(np.int64)
    return (prod & 1).astype(np.uint8)


def privacy_amplification(corrected, final_length: int, seed: np.random.Generator) -> np.ndarray:
    """Compress the reconciled key with a seed-chosen random Toeplitz matrix.

    Both parties run this with the same public seed. A non-positive length
    means the round yields no key and an empty array comes back.
    """
    corrected = np.asarray(corrected, dtype=np.uint8)
    if final_length <= 0:
        return np.zeros(0, dtype=np.uint8)
    if final_length > len(corrected):
        raise ValueError("final key cannot be longer than the reconciled key")
    seed_bits = seed.integers(0, 2, size=len(corrected) + final_length - 1, dtype=np.uint8)
    return toeplitz_hash(corrected, final_length, seed_bits)


def final_length_from_rate(stats: GainStats, bounds: DecoyBounds, leakage_bits: int, n_sifted: int,
                           verification_bits: int = VERIFICATION_BITS) -> int:
    """Secure key length for ``n_sifted`` reconciled signal bits (asymptotic decoy bounds)."""
    if n_sifted <= 0 or stats.q_signal <= 0:
        return 0
    single_share = min(bounds.q1_lower / stats.q_signal, 1.0)
    length = n_sifted * single_share * secrecy_fraction(bounds.e1_upper) - leakage_bits - verification_bits
    return max(0, math.floor(length))
