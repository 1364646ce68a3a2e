"""Seeded, order-independent random substreams.

Every consumer (encoding, channel, each detector, noise, post-processing)
draws from its own generator derived from ``(seed, *keys)``, so results do
not depend on the order in which stages are evaluated.
"""
from __future__ import annotations

import zlib

import numpy as np


def _as_key(key: int | str) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    if key < 0:
        raise ValueError(f"substream keys must be non-negative, got {key}")
    return int(key)


def substream(seed: int, *keys: int | str) -> np.random.Generator:
    """Return an independent generator for the logical consumer ``keys``."""
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(_as_key(k) for k in keys))
    return np.random.default_rng(seq)
