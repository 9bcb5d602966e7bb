from .base import EstimateResult, EstimatorConfig
from .em import em_estimate
from .gmm import (
    gmm_estimate,
    gmm_estimate_from_moments,
    moment_statistics,
    unbiased_moment_coefficients,
)
from .ks import KSObjective, min_ks_estimate
from .mmd import (
    MMDObjective,
    median_heuristic_gamma,
    min_mmd_estimate,
    mmd_distance,
    mmd_squared,
    rbf_j_vector,
    rbf_k_matrix,
)
from .optimize import OptimizerSettings, optimize_over_gk
from .phi import PhiClass, ks_distance, phi_distance

ESTIMATORS = {
    "min-ks": min_ks_estimate,
    "min-mmd": lambda data, kernel, cfg: min_mmd_estimate(data, kernel, cfg=cfg),
    "gmm": gmm_estimate,
    "em": em_estimate,
}


def estimate(data, kernel, cfg: EstimatorConfig, kind="plain"):
    """Dispatch on ``cfg.estimator``."""
    from ..errors import ConfigError

    if cfg.estimator == "em":
        return em_estimate(data, kernel, cfg, kind=kind)
    if kind != "plain":
        raise ConfigError(f"{cfg.estimator} only fits plain mixtures")
    try:
        fn = ESTIMATORS[cfg.estimator]
    except KeyError:
        raise ConfigError(f"unknown estimator {cfg.estimator!r}") from None
    return fn(data, kernel, cfg)


__all__ = [
    "EstimateResult",
    "EstimatorConfig",
    "KSObjective",
    "MMDObjective",
    "OptimizerSettings",
    "PhiClass",
    "em_estimate",
    "estimate",
    "gmm_estimate",
    "gmm_estimate_from_moments",
    "ks_distance",
    "median_heuristic_gamma",
    "min_ks_estimate",
    "min_mmd_estimate",
    "mmd_distance",
    "mmd_squared",
    "moment_statistics",
    "optimize_over_gk",
    "phi_distance",
    "rbf_j_vector",
    "rbf_k_matrix",
    "unbiased_moment_coefficients",
]
