"""Gaussian continuous-variable quantum reservoir computing simulator."""

__version__ = "0.1.0"

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .features import FeatureScheme, assemble_feature_matrix
from .reservoir import ReservoirConfig, init_reservoir, run_trajectory
from .tasks import IPCConfig, NarmaParams, compute_ipc, narma_target

__all__ = [
    "__version__",
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "FeatureScheme",
    "assemble_feature_matrix",
    "ReservoirConfig",
    "init_reservoir",
    "run_trajectory",
    "IPCConfig",
    "NarmaParams",
    "compute_ipc",
    "narma_target",
]
