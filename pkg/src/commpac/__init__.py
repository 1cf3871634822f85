"""Multi-agent PAC exploration with a central learner over noisy communication channels."""

from .bounds import PacParams, PacReport, pac_report
from .channels import ChannelSpec, CommGraph
from .config import ConfigError, ExperimentConfig, load_config
from .experiment import emit_csv, run_experiment, weight_surface
from .mdp import GridWorld, Mdp, exact_value_iteration
from .protocol import SCHEMES, Channels, make_scheme, make_system, run_steps
from .sampling import BellmanConfig, SampleSet, SampleTable, value_iteration
from .weighting import (
    WeightVector,
    identical_case_weights,
    optimal_additive_weights,
    quantization_weights,
    uniform_vs_learner_only,
)

__version__ = "0.1.0"

__all__ = [
    "BellmanConfig", "ChannelSpec", "Channels", "CommGraph", "ConfigError", "ExperimentConfig",
    "GridWorld", "Mdp", "PacParams", "PacReport", "SCHEMES", "SampleSet", "SampleTable",
    "WeightVector", "emit_csv", "exact_value_iteration", "identical_case_weights", "load_config",
    "make_scheme", "make_system", "optimal_additive_weights", "pac_report", "quantization_weights",
    "run_experiment", "run_steps", "uniform_vs_learner_only", "value_iteration", "weight_surface",
]
