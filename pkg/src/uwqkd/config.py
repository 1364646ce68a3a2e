"""Experiment configuration and the flat ``key = value`` config file format.

Keys mirror the dataclass fields, with dotted sections::

    seed = 7
    distance_m = 23
    detector.dark_hz = 5
    attack.kind = pns
    water.JerlovI.450 = 0.08

Defaults reproduce the 30 m pool experiment.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .adversary import AttackConfig, AttackKind
from .channel import DEFAULT_WATER_TYPES, LinkBudget, build_link, water_type
from .receiver import DetectorConfig
from .transmitter import SourceConfig

MODES = ("simulate", "sweep", "sync-test", "analyze")


class ConfigError(ValueError):
    """Unknown key or unparsable value in an experiment configuration."""


@dataclass(frozen=True)
class SyncConfig:
    detect_prob: float = 0.4
    noise_hz: float = 100.0
    tolerance_ps: int = 1000
    delta_t_ps: int = 2500
    window_ps: int = 5000
    clock_ppm: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.detect_prob <= 1.0:
            raise ConfigError("sync.detect_prob must be a probability")
        if self.noise_hz < 0 or self.tolerance_ps <= 0 or self.window_ps < 0:
            raise ConfigError("sync rates and windows must be non-negative")


@dataclass(frozen=True)
class PostConfig:
    sample_fraction: float = 0.1
    ec_passes: int = 4
    ec_efficiency: float = 1.16
    abort_qber: float = 0.11
    # None: use the sifting rate measured in the round
    sifting_factor: float | None = None

    def __post_init__(self):
        if not 0.0 < self.sample_fraction < 1.0:
            raise ConfigError("post.sample_fraction must lie in (0, 1)")
        if self.ec_passes < 1:
            raise ConfigError("post.ec_passes must be at least 1")


@dataclass(frozen=True)
class SweepConfig:
    step_m: float = 1.0
    waters: tuple[str, ...] = ("JerlovI", "JerlovII", "JerlovIII_1C", "Measured", "JerlovIII_3C")
    distances: tuple[float, ...] = ()
    max_distance_m: float | None = None
    sifting_factor: float = 0.5


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 20210901
    water: str = "Measured"
    wavelength_nm: int = 450
    distance_m: float = 30.0
    system_db: float = 8.0
    session_s: float = 10.0
    rounds: int = 30
    # None: simulate every pulse of the session in real time (session_s x repetition rate)
    pulses_per_round: int | None = None
    mode: str = "simulate"
    source: SourceConfig = field(default_factory=SourceConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    attack: AttackConfig = field(default_factory=AttackConfig)
    sync: SyncConfig = field(default_factory=SyncConfig)
    post: PostConfig = field(default_factory=PostConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    water_overrides: tuple[tuple[str, int, float], ...] = ()

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.distance_m < 0 or self.system_db < 0:
            raise ConfigError("distance_m and system_db must be non-negative")
        if self.rounds < 1 or self.session_s <= 0:
            raise ConfigError("rounds and session_s must be positive")
        if self.pulses_per_round is not None and self.pulses_per_round < 1:
            raise ConfigError("pulses_per_round must be positive")
        self.water_type()

    def water_type(self, name: str | None = None):
        overrides = {(n, wl): v for n, wl, v in self.water_overrides}
        try:
            return water_type(name or self.water, overrides)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def n_pulses(self) -> int:
        if self.pulses_per_round is not None:
            return int(self.pulses_per_round)
        return int(round(self.session_s * self.source.repetition_hz))

    def link(self) -> LinkBudget:
        return build_link(self.water_type(), self.wavelength_nm, self.distance_m, self.system_db)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


_SECTIONS = {"source": SourceConfig, "detector": DetectorConfig, "attack": AttackConfig,
             "sync": SyncConfig, "post": PostConfig, "sweep": SweepConfig}
_OPTIONAL = {("attack", "pns_bypass_efficiency"): float, ("post", "sifting_factor"): float,
             ("", "pulses_per_round"): int, ("sweep", "max_distance_m"): float}


def _coerce(section: str, name: str, default: Any, raw: str) -> Any:
    text = raw.strip()
    opt = _OPTIONAL.get((section, name))
    if opt is not None:
        return None if text.lower() in ("none", "") else opt(float(text)) if opt is int else opt(text)
    if isinstance(default, AttackKind):
        return AttackKind(text.lower())
    if isinstance(default, bool):
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(default, int):
        return int(float(text)) if float(text).is_integer() else int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        items = [t.strip() for t in text.split(",") if t.strip()]
        if name == "distances":
            return tuple(float(t) for t in items)
        return tuple(items)
    return text


def config_from_mapping(values: dict[str, str], base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Apply dotted ``key -> raw string`` overrides on top of ``base``."""
    base = base or ExperimentConfig()
    top: dict[str, Any] = {}
    sections: dict[str, dict[str, Any]] = {s: {} for s in _SECTIONS}
    overrides = list(base.water_overrides)
    top_fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    for key, raw in values.items():
        parts = key.split(".")
        try:
            if parts[0] == "water" and len(parts) == 3:
                if parts[1] not in DEFAULT_WATER_TYPES:
                    raise ConfigError(f"unknown water type in key {key!r}")
                overrides.append((parts[1], int(parts[2]), float(raw)))
            elif len(parts) == 2 and parts[0] in _SECTIONS:
                section, name = parts
                names = {f.name for f in dataclasses.fields(_SECTIONS[section])}
                if name not in names:
                    raise ConfigError(f"unknown config key {key!r}")
                default = getattr(getattr(base, section), name)
                if default is None and (section, name) not in _OPTIONAL:
                    raise ConfigError(f"unknown config key {key!r}")
                sections[section][name] = _coerce(section, name, default, raw)
            elif len(parts) == 1 and key in top_fields and key not in _SECTIONS and key != "water_overrides":
                top[key] = _coerce("", key, getattr(base, key), raw)
            else:
                raise ConfigError(f"unknown config key {key!r}")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from None
    try:
        for section, changes in sections.items():
            if changes:
                top[section] = dataclasses.replace(getattr(base, section), **changes)
        top["water_overrides"] = tuple(overrides)
        return dataclasses.replace(base, **top)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        values[key] = raw
    return config_from_mapping(values, base)


def load_config(path: str | Path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    return parse_config_text(Path(path).read_text(), base)
