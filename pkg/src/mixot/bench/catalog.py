"""Built-in rate scenarios. ``anchor`` names the claim each one exercises."""

from __future__ import annotations

from ..errors import ConfigError
from .config import ExperimentConfig

N_LADDER = [250, 500, 1000, 2000, 4000, 8000, 16000]
GAUSS = {"family": "gaussian-location", "cov": 1.0}
TWO_ATOMS = {"atoms": [[-1.0], [1.0]], "weights": [0.5, 0.5]}
ONE_ATOM = {"atoms": [[0.0]], "weights": [1.0]}
FAST_NM = {"n_starts": 4, "fatol": 1e-8, "xatol": 1e-5}


def _scenarios():
    return [
        ExperimentConfig(
            scenario="ks-exactfit-gauss",
            kernel=GAUSS,
            truth=TWO_ATOMS,
            estimator={"estimator": "min-ks", "k": 2, **FAST_NM},
            metric={"kind": "W", "r": 1},
            ladder=N_LADDER,
            replicates=200,
            anchor="exact-fitted pointwise rate: W1 error of n^(-1/2)",
            expected_slope={"W1": [-0.62, -0.38]},
        ),
        ExperimentConfig(
            scenario="ks-overfit-gauss",
            kernel=GAUSS,
            truth=ONE_ATOM,
            estimator={"estimator": "min-ks", "k": 2, **FAST_NM},
            metric={"kind": "W", "r": 2},
            ladder=N_LADDER,
            replicates=200,
            anchor="overfitted pointwise rate: W2 error of n^(-1/4)",
            expected_slope={"W2": [-0.37, -0.15]},
        ),
        ExperimentConfig(
            scenario="mmd-exactfit-gauss",
            kernel=GAUSS,
            truth=TWO_ATOMS,
            estimator={"estimator": "min-mmd", "k": 2, "n_starts": 4},
            metric={"kind": "W", "r": 1},
            ladder=N_LADDER,
            replicates=100,
            anchor="minimum-MMD estimator, exact-fitted: W1 error of n^(-1/2)",
            expected_slope={"W1": [-0.62, -0.38]},
        ),
        ExperimentConfig(
            scenario="gmm-exactfit-gauss-1d",
            kernel=GAUSS,
            truth=TWO_ATOMS,
            estimator={"estimator": "gmm", "k": 2, **FAST_NM},
            metric={"kind": "W", "r": 1},
            ladder=N_LADDER,
            replicates=100,
            anchor="method of moments, exact-fitted: W1 error of n^(-1/2)",
            expected_slope={"W1": [-0.62, -0.38]},
        ),
        ExperimentConfig(
            scenario="gmm-overfit-gauss-1d",
            kernel=GAUSS,
            truth=ONE_ATOM,
            estimator={"estimator": "gmm", "k": 2, **FAST_NM},
            metric={"kind": "W", "r": 3},
            ladder=N_LADDER,
            replicates=100,
            anchor="method of moments, overfit index d1=2: W3 error of n^(-1/(2(2d1-1))) = n^(-1/6)",
            expected_slope={"W3": [-0.29, -0.05]},
        ),
        ExperimentConfig(
            scenario="em-gamma-pathological",
            kernel={"family": "gamma"},
            truth={"atoms": [[2.0, 1.5], [3.0, 1.5]], "weights": [0.5, 0.5]},
            estimator={"estimator": "em", "k": 2, "em_restarts": 4, "em_max_iter": 500,
                       "em_tol": 1e-9},
            metric={"kind": "W", "r": 1},
            ladder=N_LADDER,
            replicates=50,
            anchor="gamma mixture on the pathological set: W1 error slower than n^(-1/2)",
            expected_slope={"W1": [-0.45, 0.0]},
        ),
        ExperimentConfig(
            scenario="em-product-bernoulli",
            kernel={"family": "bernoulli"},
            truth={"atoms": [[0.2], [0.7]], "weights": [0.4, 0.6]},
            estimator={"estimator": "em", "k": 2, "em_restarts": 4},
            metric={"kind": "atom-weight"},
            ladder=[[500, 16], [500, 32], [500, 64], [500, 128], [500, 256]],
            replicates=100,
            model="product",
            anchor="mixtures of products, fixed m: atom error of (mN)^(-1/2), weight error flat in N",
            expected_slope={"atom": [-0.65, -0.35], "weight": [-0.12, 0.12]},
        ),
        ExperimentConfig(
            scenario="em-product-gauss",
            kernel=GAUSS,
            truth={"atoms": [[-2.0], [2.0]], "weights": [0.5, 0.5]},
            estimator={"estimator": "em", "k": 2, "em_restarts": 4},
            metric={"kind": "atom-weight"},
            ladder=[[500, 1], [500, 2], [500, 4], [500, 8], [500, 16], [500, 32]],
            replicates=200,
            model="product",
            anchor="mixtures of products, fixed m: atom error of (mN)^(-1/2), weight error flat in N",
            expected_slope={"atom": [-0.65, -0.35], "weight": [-0.12, 0.12]},
        ),
        ExperimentConfig(
            scenario="overfit-gauss-locscale",
            kernel={"family": "gaussian-location-scale"},
            truth={"atoms": [[0.0, 1.0]], "weights": [1.0]},
            estimator={"estimator": "em", "k": 2, "em_restarts": 4, "em_max_iter": 500,
                       "em_tol": 1e-9},
            metric={"kind": "W", "r": 4},
            ladder=N_LADDER,
            replicates=50,
            anchor="location-scale gaussian overfitted by one atom: W4 error of n^(-1/8)",
            expected_slope={"W4": [-0.245, -0.005]},
        ),
        ExperimentConfig(
            scenario="ks-exactfit-gauss-local",
            kernel=GAUSS,
            truth=TWO_ATOMS,
            estimator={"estimator": "min-ks", "k": 2, **FAST_NM},
            metric={"kind": "W", "r": 1},
            ladder=N_LADDER,
            replicates=50,
            local_radius=0.4,
            anchor="local worst case (heuristic): max W1 error over truths near G0",
        ),
    ]


def scenario_catalog():
    return _scenarios()


def get_scenario(name):
    for cfg in _scenarios():
        if cfg.scenario == name:
            return cfg
    raise ConfigError(f"unknown scenario {name!r}")
