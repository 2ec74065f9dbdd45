"""Byzantine-robust distributed online learning: simulation and regret analysis."""

from .aggregators import AggregatorSpec, aggregate, bound_constant, certify
from .attacks import AttackSpec
from .config import ConfigError, ExperimentConfig, load_config, resolve
from .core import Cohort, Message, RandomStream
from .engine import EnsembleResult, RegretTrace, run_experiment, run_trial
from .environment import LossStreamSpec
from .schedules import Schedule

__version__ = "0.1.0"

__all__ = [
    "AggregatorSpec",
    "AttackSpec",
    "Cohort",
    "ConfigError",
    "EnsembleResult",
    "ExperimentConfig",
    "LossStreamSpec",
    "Message",
    "RandomStream",
    "RegretTrace",
    "Schedule",
    "aggregate",
    "bound_constant",
    "certify",
    "load_config",
    "resolve",
    "run_experiment",
    "run_trial",
]
