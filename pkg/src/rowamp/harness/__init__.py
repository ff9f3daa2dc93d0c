"""Experiment plumbing: configuration, runners, figure data and the CLI."""

from .config import ExperimentConfig, build_system, load_config, parse_config
from .experiments import ResultRecord, ls_baseline, run_experiment, sweep_phase_diagram

__all__ = [
    "ExperimentConfig",
    "ResultRecord",
    "build_system",
    "load_config",
    "ls_baseline",
    "parse_config",
    "run_experiment",
    "sweep_phase_diagram",
]
