"""Experiment orchestration, result files and the command-line interface."""
from .config import ConfigError, ExperimentConfig, load_config
from .experiments import run_offline_experiment, run_online_experiment, tune
from .results import ResultRow, emit, read_results

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ResultRow",
    "emit",
    "load_config",
    "read_results",
    "run_offline_experiment",
    "run_online_experiment",
    "tune",
]
