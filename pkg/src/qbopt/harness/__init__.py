"""Scenario configuration, benchmark runner, data export and the ``qbopt`` CLI."""

from qbopt.harness.config import ConfigError, ScenarioConfig, load_config, parse_config
from qbopt.harness.presets import get_preset, list_presets
from qbopt.harness.runner import BenchmarkResult, BenchmarkSummary, run_scenario, run_single

__all__ = [
    "BenchmarkResult",
    "BenchmarkSummary",
    "ConfigError",
    "ScenarioConfig",
    "get_preset",
    "list_presets",
    "load_config",
    "parse_config",
    "run_scenario",
    "run_single",
]
