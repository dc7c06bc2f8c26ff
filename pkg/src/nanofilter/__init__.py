"""Natural-gradient Gaussian filtering with baselines and a benchmark harness."""

from .gaussian import (
    GaussianBelief,
    NaturalParams,
    NotSPDError,
    inverse_fisher_blocks,
    kl_divergence,
    log_density,
    log_partition,
    sample,
    update_objective,
)
from .model import (
    MeasurementLoss,
    NoiseSpec,
    StateSpaceModel,
    build_linear_model,
    measurement_loss,
    sample_noise,
)
from .nano import NanoConfig, UpdateTrace, nano_predict, nano_update
from .sigma import SigmaPointSet, TransformParams
from .baselines import ekf_predict, ekf_update, kf_update, ukf_predict, ukf_update

__version__ = "0.1.0"

__all__ = [
    "GaussianBelief",
    "NaturalParams",
    "NotSPDError",
    "inverse_fisher_blocks",
    "kl_divergence",
    "log_density",
    "log_partition",
    "sample",
    "update_objective",
    "MeasurementLoss",
    "NoiseSpec",
    "StateSpaceModel",
    "build_linear_model",
    "measurement_loss",
    "sample_noise",
    "NanoConfig",
    "UpdateTrace",
    "nano_predict",
    "nano_update",
    "SigmaPointSet",
    "TransformParams",
    "ekf_predict",
    "ekf_update",
    "kf_update",
    "ukf_predict",
    "ukf_update",
    "__version__",
]
