"""Channel-resident eavesdroppers: intercept-resend and photon-number splitting."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import brentq
from scipy.stats import poisson


class AttackKind(str, Enum):
    NONE = "none"
    INTERCEPT = "intercept"
    PNS = "pns"


@dataclass(frozen=True)
class AttackConfig:
    kind: AttackKind = AttackKind.NONE
    intercept_fraction: float = 1.0
    # None lets the session pick the value that reproduces the honest signal gain
    pns_bypass_efficiency: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", AttackKind(self.kind))
        if not 0.0 <= self.intercept_fraction <= 1.0:
            raise ValueError("intercept_fraction must lie in [0, 1]")
        e = self.pns_bypass_efficiency
        if e is not None and not 0.0 < e <= 1.0:
            raise ValueError("pns_bypass_efficiency must lie in (0, 1]")


def intercept_resend(polarization, photons, cfg: AttackConfig, rng: np.random.Generator):
    """Measure-and-resend on a fraction of pulses.

    Eve picks one of the two protocol bases at random, measures any non-empty
    pulse and resends a single photon in the state she found. Returns the
    forwarded polarization, forwarded photon number and the intercept mask.
    """
    if cfg.kind is not AttackKind.INTERCEPT:
        raise ValueError("intercept_resend needs an INTERCEPT attack config")
    pol = np.asarray(polarization, dtype=np.int64)
    k = np.asarray(photons, dtype=np.int64)
    hit = (rng.random(pol.shape) < cfg.intercept_fraction) & (k > 0)
    eve_pol = eve_measurement(pol, rng)
    return np.where(hit, eve_pol, pol), np.where(hit, 1, k), hit


def eve_measurement(polarization, rng: np.random.Generator) -> np.ndarray:
    """State Eve resends after measuring in a uniformly random protocol basis."""
    pol = np.asarray(polarization, dtype=np.int64)
    basis = rng.integers(0, 2, size=pol.shape)
    coin = rng.integers(0, 2, size=pol.shape)
    bit = np.where(basis == (pol >> 1), pol & 1, coin)
    return 2 * basis + bit


def pns_attack(k, cfg: AttackConfig | None = None):
    """Block single photons; keep one photon of every multi-photon pulse."""
    if cfg is not None and cfg.kind is not AttackKind.PNS:
        raise ValueError("pns_attack needs a PNS attack config")
    k = np.asarray(k, dtype=np.int64)
    if np.any(k < 0):
        raise ValueError("photon numbers must be non-negative")
    out = np.maximum(k - 1, 0)
    return int(out) if out.ndim == 0 else out


def _pns_gain(mu: float, click: float) -> float:
    """Probability Bob clicks when every forwarded photon clicks with ``click``."""
    miss = 1.0 - click
    p_multi = 1.0 - math.exp(-mu) * (1.0 + mu)
    if miss == 0.0:
        return p_multi
    # sum_{k>=2} Pois(k) miss^(k-1) = e^-mu (e^(mu miss) - 1 - mu miss) / miss
    tail = math.exp(-mu) * (math.expm1(mu * miss) - mu * miss) / miss
    return p_multi - tail


def calibrate_pns_efficiency(mu: float, honest_transmittance: float, click_probability: float) -> float:
    """Transmittance Eve must give forwarded photons to reproduce the honest signal gain.

    Capped at 1 when even a lossless bypass cannot match it.
    """
    target = -math.expm1(-mu * honest_transmittance * click_probability)
    if _pns_gain(mu, click_probability) <= target:
        return 1.0
    return brentq(lambda e: _pns_gain(mu, e * click_probability) - target, 1e-15, 1.0, xtol=1e-18, rtol=1e-14)


@dataclass(frozen=True)
class AttackBranch:
    """One way a pulse can travel from Alice to Bob's receiver input.

    ``weight`` is the probability a pulse takes the branch; each of the
    ``forwarded(k)`` photons then survives with ``transmittance``.
    """

    weight: float
    transmittance: float
    kind: str

    def forwarded(self, k):
        k = np.asarray(k, dtype=np.int64)
        if self.kind == "resend":
            return (k > 0).astype(np.int64)
        if self.kind == "split":
            return np.maximum(k - 1, 0)
        return k


def attack_branches(cfg: AttackConfig, honest_transmittance: float, mu_signal: float,
                    click_probability: float) -> list[AttackBranch]:
    if cfg.kind is AttackKind.NONE:
        return [AttackBranch(1.0, honest_transmittance, "direct")]
    if cfg.kind is AttackKind.INTERCEPT:
        f = cfg.intercept_fraction
        return [b for b in (AttackBranch(f, honest_transmittance, "resend"),
                            AttackBranch(1.0 - f, honest_transmittance, "direct")) if b.weight > 0]
    eff = cfg.pns_bypass_efficiency
    if eff is None:
        eff = calibrate_pns_efficiency(mu_signal, honest_transmittance, click_probability)
    return [AttackBranch(1.0, eff, "split")]


def photon_number_cutoff(mu: float) -> int:
    """Largest photon number worth tracking for a Poisson(mu) source."""
    if mu <= 0:
        return 0
    k = np.arange(int(mu + 20 * math.sqrt(mu)) + 40)
    return int(np.argmax(poisson.sf(k, mu) < 1e-17)) + 1
