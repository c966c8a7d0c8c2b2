"""Scenario-driven runs: JSON configs, reproducible outputs, sweeps, CLI."""

from .config import ConfigError, config_hash, derive_seed, load_config, resolve_config
from .runner import RunRecord, ScenarioError, run_scenario, run_sweep, verify_manifest

__all__ = [
    "ConfigError", "RunRecord", "ScenarioError", "config_hash", "derive_seed", "load_config",
    "resolve_config", "run_scenario", "run_sweep", "verify_manifest",
]
