"""Tunable-cooperation federated learning on a cell sleep control testbed."""

__version__ = "0.1.0"

from .config import ScenarioConfig, load_config
from .engine import ExperimentPlan, run_experiment, run_independent

__all__ = [
    "ScenarioConfig",
    "load_config",
    "ExperimentPlan",
    "run_experiment",
    "run_independent",
    "__version__",
]
