from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from ..measures import MixingMeasure
from .optimize import OptimizerSettings


@dataclass
class EstimatorConfig:
    """Settings shared by all estimators of a k-atom mixing measure.

    ``lo``/``hi`` default to the kernel's parameter box. ``gamma`` is the MMD
    bandwidth (median heuristic when ``None``); ``center`` the moment centre
    for GMM; ``em_restarts`` the number of EM initialisations.
    """

    k: int = 1
    estimator: str = "min-ks"
    lo: list | None = None
    hi: list | None = None
    n_starts: int = 8
    max_iter: int | None = None
    xatol: float = 1e-6
    fatol: float = 1e-10
    seed: int = 0
    weight_floor: float = 0.0
    gamma: float | None = None
    center: float = 0.0
    em_restarts: int = 16
    em_max_iter: int = 2000
    em_tol: float = 1e-10

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.n_starts < 1 or self.em_restarts < 1:
            raise ConfigError("multistart count must be >= 1")

    def box(self, kernel):
        lo = kernel.lo if self.lo is None else np.asarray(self.lo, dtype=float)
        hi = kernel.hi if self.hi is None else np.asarray(self.hi, dtype=float)
        return np.atleast_1d(lo), np.atleast_1d(hi)

    def optimizer(self):
        return OptimizerSettings(
            n_starts=self.n_starts,
            max_iter=self.max_iter,
            xatol=self.xatol,
            fatol=self.fatol,
            seed=self.seed,
            weight_floor=self.weight_floor,
        )

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        bad = set(d) - known
        if bad:
            raise ConfigError(f"unknown estimator fields: {sorted(bad)}")
        return cls(**d)


@dataclass
class EstimateResult:
    estimate: MixingMeasure
    objective: float
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "estimate": self.estimate.to_dict(),
            "objective": self.objective,
            "diagnostics": {k: v for k, v in self.diagnostics.items() if k != "loglik_trace"},
        }
