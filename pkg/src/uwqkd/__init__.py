"""Decoy-state BB84 simulator for underwater free-space links."""
from .channel import DEFAULT_WATER_TYPES, LinkBudget, WaterType, equivalent_distance, water_type
from .config import ConfigError, ExperimentConfig, load_config
from .decoy import GainStats, bound_single_photon, gllp_rate, rate_vs_distance
from .pipeline import analyze_round, run_round
from .session import simulate_round

__all__ = [
    "DEFAULT_WATER_TYPES", "LinkBudget", "WaterType", "equivalent_distance", "water_type",
    "ConfigError", "ExperimentConfig", "load_config",
    "GainStats", "bound_single_photon", "gllp_rate", "rate_vs_distance",
    "analyze_round", "run_round", "simulate_round",
]
__version__ = "0.1.0"
