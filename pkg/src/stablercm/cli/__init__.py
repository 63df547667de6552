"""Experiment orchestration: config parsing, sweeps and result files."""

from .config import EXPERIMENT_KINDS, ExperimentConfig, parse_config, parse_text, validate
from .main import RunReport, main, run_experiment

__all__ = ["EXPERIMENT_KINDS", "ExperimentConfig", "RunReport", "main", "parse_config", "parse_text",
           "run_experiment", "validate"]
