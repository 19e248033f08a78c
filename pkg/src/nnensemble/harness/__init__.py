"""Experiment runner: level-0, level-1 and ensemble-size protocols plus reports."""

from .config import ConfigError, ExperimentConfig, SyntheticSpec, load_config
from .report import validate_and_report
from .runner import MethodResult, run_level0, run_level1, run_methods, run_size_sensitivity

__all__ = [
    "ConfigError", "ExperimentConfig", "SyntheticSpec", "load_config", "validate_and_report",
    "MethodResult", "run_level0", "run_level1", "run_methods", "run_size_sensitivity",
]
