"""Decoy-state analysis: per-class gains, single-photon bounds and the GLLP rate.

The bounds use the vacuum + weak decoy estimates

    Y1 >= mu_s / (mu_s mu_1 - mu_1^2)
          * (Q_1 e^{mu_1} - Q_s e^{mu_s} mu_1^2 / mu_s^2 - (mu_s^2 - mu_1^2) / mu_s^2 * Y0)
    e1 <= (E_1 Q_1 e^{mu_1} - Y0 / 2) / (Y1 mu_1)

and the asymptotic key rate per signal pulse

    R = q * (-Q_s f H2(E_s) + Q1 (1 - H2(e1))),   Q1 = Y1 mu_s e^{-mu_s}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import WaterType, build_link
from .receiver import DetectorConfig
from .transmitter import Intensity, SourceConfig

DEFAULT_EC_EFFICIENCY = 1.16
VACUUM_ERROR_RATE = 0.5


def binary_entropy(x):
    """Shannon entropy of a Bernoulli(x) variable in bits, with 0 log 0 = 0."""
    arr = np.asarray(x, dtype=float)
    if np.any((arr < 0) | (arr > 1)) or np.any(np.isnan(arr)):
        raise ValueError(f"binary entropy is defined on [0, 1], got {x!r}")
    inner = (arr > 0) & (arr < 1)
    safe = np.where(inner, arr, 0.5)
    h = np.where(inner, -safe * np.log2(safe) - (1 - safe) * np.log2(1 - safe), 0.0)
    return float(h) if h.ndim == 0 else h


def secrecy_fraction(e1: float) -> float:
    """``1 - H2(e1)``, clamped to zero once the phase error reaches 1/2."""
    if e1 >= 0.5:
        return 0.0
    return 1.0 - binary_entropy(max(e1, 0.0))


@dataclass
class GainStats:
    """Per-class tallies, indexed by :class:`Intensity`.

    ``n_sifted`` counts basis-matched detections; error rates are taken over
    those, since only they carry a comparable bit.
    """

    n_sent: np.ndarray
    n_detected: np.ndarray
    n_sifted: np.ndarray
    n_error: np.ndarray

    def __post_init__(self):
        for name in ("n_sent", "n_detected", "n_sifted", "n_error"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.int64).reshape(3))
        if np.any(self.n_error > self.n_sifted) or np.any(self.n_sifted > self.n_detected) \
                or np.any(self.n_detected > self.n_sent) or np.any(self.n_error < 0):
            raise ValueError("tallies must satisfy 0 <= errors <= sifted <= detected <= sent")

    def gain(self, cls: Intensity) -> float:
        sent = self.n_sent[int(cls)]
        return float(self.n_detected[int(cls)] / sent) if sent else 0.0

    def error_rate(self, cls: Intensity) -> float:
        sifted = self.n_sifted[int(cls)]
        return float(self.n_error[int(cls)] / sifted) if sifted else VACUUM_ERROR_RATE

    @property
    def q_signal(self) -> float:
        return self.gain(Intensity.SIGNAL)

    @property
    def e_signal(self) -> float:
        return self.error_rate(Intensity.SIGNAL)

    @property
    def q_decoy(self) -> float:
        return self.gain(Intensity.DECOY)

    @property
    def e_decoy(self) -> float:
        return self.error_rate(Intensity.DECOY)

    @property
    def y0(self) -> float:
        return self.gain(Intensity.VACUUM)

    @property
    def sifting_rate(self) -> float:
        det = int(self.n_detected.sum())
        return float(self.n_sifted.sum() / det) if det else 0.0

    def __add__(self, other: "GainStats") -> "GainStats":
        return GainStats(self.n_sent + other.n_sent, self.n_detected + other.n_detected,
                         self.n_sifted + other.n_sifted, self.n_error + other.n_error)


@dataclass(frozen=True)
class ModelGains:
    """Expected gains and error rates; quacks like :class:`GainStats` for the rate code."""

    q_signal: float
    e_signal: float
    q_decoy: float
    e_decoy: float
    y0: float


def accumulate_gains(sent, classes, detected_sifted, errors) -> GainStats:
    """Tally detections by Alice's announced class.

    ``classes`` is the intensity class of each matched detection,
    ``detected_sifted`` flags basis agreement and ``errors`` flags a bit
    mismatch on sifted detections.
    """
    classes = np.asarray(classes, dtype=np.int64)
    sifted = np.asarray(detected_sifted, dtype=bool)
    errors = np.asarray(errors, dtype=bool) & sifted
    return GainStats(np.asarray(sent),
                     np.bincount(classes, minlength=3),
                     np.bincount(classes[sifted], minlength=3),
                     np.bincount(classes[errors], minlength=3))


@dataclass(frozen=True)
class DecoyBounds:
    y1_lower: float
    e1_upper: float
    q1_lower: float
    y1_lower_raw: float
    degenerate: bool

    def as_dict(self) -> dict:
        return {"y1_lower": self.y1_lower, "e1_upper": self.e1_upper, "q1_lower": self.q1_lower}


def bound_single_photon(stats, mu_s: float, mu_1: float) -> DecoyBounds:
    """Lower-bound the single-photon yield and upper-bound its error rate.

    ``stats`` needs ``q_signal``, ``q_decoy``, ``e_decoy`` and ``y0``.
    """
    if not mu_s > mu_1 > 0:
        raise ValueError("need mu_s > mu_1 > 0")
    y0 = stats.y0
    raw = mu_s / (mu_s * mu_1 - mu_1**2) * (
        stats.q_decoy * math.exp(mu_1)
        - stats.q_signal * math.exp(mu_s) * mu_1**2 / mu_s**2
        - (mu_s**2 - mu_1**2) / mu_s**2 * y0
    )
    y1 = min(max(raw, 0.0), 1.0)
    if y1 <= 0.0:
        return DecoyBounds(0.0, VACUUM_ERROR_RATE, 0.0, raw, True)
    e1 = (stats.e_decoy * stats.q_decoy * math.exp(mu_1) - VACUUM_ERROR_RATE * y0) / (y1 * mu_1)
    e1 = min(max(e1, 0.0), 1.0)
    return DecoyBounds(y1, e1, y1 * mu_s * math.exp(-mu_s), raw, False)


def gllp_rate(stats, bounds: DecoyBounds, q: float, f: float = DEFAULT_EC_EFFICIENCY,
              clamp: bool = True) -> float:
    """Secret key per signal pulse. Negative values mean abort unless ``clamp`` is off."""
    if not 0 < q <= 1:
        raise ValueError("sifting factor q must lie in (0, 1]")
    if f < 1:
        raise ValueError("error-correction efficiency must be >= 1")
    rate = q * (-stats.q_signal * f * binary_entropy(min(stats.e_signal, 1.0))
                + bounds.q1_lower * secrecy_fraction(bounds.e1_upper))
    return max(rate, 0.0) if clamp else rate


def single_intensity_rate(stats, mu: float, q: float, f: float = DEFAULT_EC_EFFICIENCY) -> float:
    """Rate an observer would claim from the signal class alone, trusting the channel.

    The single-photon yield is inferred by inverting an honest Poissonian
    channel (Q = Y0 + 1 - exp(-eta mu)) and its error rate is taken to be
    the observed QBER. A photon-number-splitting channel fools this estimate.
    """
    excess = min(max(stats.q_signal - stats.y0, 0.0), 1.0 - 1e-15)
    eta = -math.log1p(-excess) / mu
    y1 = min(stats.y0 + eta, 1.0)
    bounds = DecoyBounds(y1, stats.e_signal, y1 * mu * math.exp(-mu), y1, False)
    return gllp_rate(stats, bounds, q, f)


def analytic_gain_model(mu: float, eta: float, y0: float, e_det: float) -> tuple[float, float]:
    """Expected gain and QBER of a coherent pulse through transmittance ``eta``."""
    signal = 1.0 - math.exp(-eta * mu)
    q = min(y0 + signal, 1.0)
    if q == 0:
        return 0.0, VACUUM_ERROR_RATE
    return q, (VACUUM_ERROR_RATE * y0 + e_det * signal) / q


def noise_yield(det: DetectorConfig, window_ps: int = 5_000) -> float:
    """Chance that uncorrelated D1..D4 clicks land inside one slot's acceptance window."""
    return det.noise_rate_hz * window_ps * 1e-12


def model_gains(eta_link: float, det: DetectorConfig, source: SourceConfig,
                window_ps: int = 5_000) -> ModelGains:
    eta = eta_link * det.click_probability
    y0 = noise_yield(det, window_ps)
    qs, es = analytic_gain_model(source.mu_signal, eta, y0, det.polarization_error)
    qd, ed = analytic_gain_model(source.mu_decoy, eta, y0, det.polarization_error)
    return ModelGains(qs, es, qd, ed, y0)


@dataclass(frozen=True)
class CurvePoint:
    distance_m: float
    loss_db: float
    q_signal: float
    e_signal: float
    y1_lower: float
    e1_upper: float
    rate_per_pulse: float
    rate_bps: float


@dataclass
class RateCurve:
    water: str
    points: list[CurvePoint]

    @property
    def cutoff_m(self) -> float | None:
        for p in self.points:
            if p.rate_per_pulse == 0.0:
                return p.distance_m
        return None


def rate_vs_distance(water: WaterType, system_db: float, det_cfg: DetectorConfig,
                     source_cfg: SourceConfig, step_m: float, *, wavelength_nm: int = 450,
                     max_distance_m: float | None = None, q: float = 0.5,
                     f: float = DEFAULT_EC_EFFICIENCY, window_ps: int = 5_000,
                     max_points: int = 100_000, distances=None) -> RateCurve:
    """Asymptotic key rate along the water column, stopping at the first zero.

    With explicit ``distances`` every listed point is evaluated instead.
    ``rate_bps`` counts only signal-class pulses, matching how the session
    pipeline builds keys.
    """
    if distances is not None:
        grid = sorted(float(d) for d in distances)
        if not grid or grid[0] < 0:
            raise ValueError("distance grid must be non-empty and non-negative")
    elif not step_m > 0:
        raise ValueError("distance step must be positive")
    else:
        grid = None
    points = []
    for i in range(len(grid) if grid is not None else max_points):
        d = grid[i] if grid is not None else i * step_m
        if max_distance_m is not None and d > max_distance_m + 1e-9:
            break
        link = build_link(water, wavelength_nm, d, system_db)
        gains = model_gains(link.transmittance, det_cfg, source_cfg, window_ps)
        bounds = bound_single_photon(gains, source_cfg.mu_signal, source_cfg.mu_decoy)
        r = gllp_rate(gains, bounds, q, f)
        points.append(CurvePoint(d, link.total_db, gains.q_signal, gains.e_signal, bounds.y1_lower,
                                 bounds.e1_upper, r, r * source_cfg.repetition_hz * source_cfg.p_signal))
        if r == 0.0 and max_distance_m is None and grid is None:
            break
    return RateCurve(water.name, points)
