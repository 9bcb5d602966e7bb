"""Optimal-transport tools for finite mixture models: distances between mixing
measures, kernel families, estimators, identifiability probes and rate benches."""

from .errors import ConfigError, EstimationError, ExperimentFailed, MixotError, UnsupportedError
from .estimators import EstimateResult, EstimatorConfig, estimate
from .kernels import KernelModel, make_kernel
from .measures import (
    MeasureOfMeasures,
    MixingMeasure,
    TransportPlan,
    d_n_metric,
    moment_distance,
    nested_wasserstein,
    transport,
    wasserstein,
)
from .mixtures import MixtureModel, ProductMixtureModel, divergence
from .rng import derive_seed

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "EstimateResult", "EstimationError", "EstimatorConfig", "ExperimentFailed",
    "KernelModel", "MeasureOfMeasures", "MixingMeasure", "MixotError", "MixtureModel",
    "ProductMixtureModel", "TransportPlan", "UnsupportedError", "d_n_metric", "derive_seed",
    "divergence", "estimate", "make_kernel", "moment_distance", "nested_wasserstein",
    "transport", "wasserstein", "__version__",
]
