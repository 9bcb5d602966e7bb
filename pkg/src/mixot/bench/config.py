from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy import stats

from ..errors import ConfigError
from ..estimators import EstimatorConfig
from ..kernels import make_kernel
from ..measures import MixingMeasure

METRICS = ("W", "D_N", "atom-weight")
MIN_REPLICATES = 30


@dataclass
class ExperimentConfig:
    """One rate experiment. Field names double as the JSON config keys.

    ``ladder`` holds sample sizes n (plain mixtures) or ``[m, N]`` pairs
    (product mixtures). ``metric`` is ``{"kind": "W", "r": r}``, ``{"kind": "D_N"}``
    or ``{"kind": "atom-weight"}``. ``local_radius`` turns the run into the
    heuristic local worst-case variant: each replicate draws its own truth
    within that radius of ``truth`` and rungs report the maximum error.
    """

    scenario: str
    kernel: dict
    truth: dict
    estimator: dict
    metric: dict
    ladder: list
    replicates: int
    seed: int = 0
    model: str = "plain"
    anchor: str = ""
    expected_slope: dict | None = None
    local_radius: float | None = None
    timing: bool = False
    smoke: bool = False
    notes: str = ""

    def __post_init__(self):
        if self.model not in ("plain", "product"):
            raise ConfigError(f"model must be plain or product, got {self.model!r}")
        if self.metric.get("kind") not in METRICS:
            raise ConfigError(f"unknown error metric {self.metric!r}")
        if not self.ladder:
            raise ConfigError("empty ladder")
        if self.model == "plain":
            sizes = [int(n) for n in self.ladder]
            if any(n < 1 for n in sizes):
                raise ConfigError("sample sizes must be positive")
        else:
            if any(len(p) != 2 for p in self.ladder):
                raise ConfigError("product ladders hold [m, N] pairs")
            sizes = [int(m) * int(N) for m, N in self.ladder]
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ConfigError("ladder must be strictly increasing")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if self.replicates < MIN_REPLICATES and not self.smoke:
            raise ConfigError(f"slope fits need >= {MIN_REPLICATES} replicates (or smoke=true)")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        # fail early on malformed nested specs
        make_kernel(self.kernel)
        self.truth_measure()
        self.estimator_config()

    def rungs(self):
        """List of ``(n_total, m, N)`` per rung."""
        if self.model == "plain":
            return [(int(n), int(n), 1) for n in self.ladder]
        return [(int(m) * int(N), int(m), int(N)) for m, N in self.ladder]

    def truth_measure(self):
        try:
            return MixingMeasure.from_dict(self.truth)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad truth measure: {exc}") from None

    def estimator_config(self):
        return EstimatorConfig.from_dict(dict(self.estimator))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        bad = set(d) - known
        if bad:
            raise ConfigError(f"unknown experiment fields: {sorted(bad)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad experiment config: {exc}") from None

    def scaled(self, factor):
        """Smoke-sized copy: replicates times ``factor``; the n-ladder keeps its
        bottom rung and rung count with the top multiplied by ``factor``.
        Product ladders keep their (m, N) pairs.
        """
        if factor <= 0:
            raise ConfigError("scale must be positive")
        d = self.to_dict()
        d["replicates"] = max(2, int(round(self.replicates * factor)))
        if self.model == "plain" and factor < 1:
            lo, hi = int(self.ladder[0]), int(self.ladder[-1])
            k = len(self.ladder)
            top = max(hi * factor, 2.0 * lo)
            grid = np.geomspace(lo, top, k) if k > 1 else np.array([lo])
            ladder = []
            for n in grid:
                n = int(round(n))
                ladder.append(n if not ladder or n > ladder[-1] else ladder[-1] + 1)
            d["ladder"] = ladder
        d["smoke"] = factor < 1 or self.smoke
        return ExperimentConfig(**d)


@dataclass
class RateFit:
    """Least squares of log(mean error) on log(n)."""

    slope: float
    intercept: float
    slope_se: float
    r2: float
    ci: tuple
    sizes: list = field(default_factory=list)
    means: list = field(default_factory=list)
    ses: list = field(default_factory=list)

    @property
    def rungs(self):
        return len(self.sizes)

    def to_dict(self):
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "slope_se": self.slope_se,
            "r2": self.r2,
            "ci95": list(self.ci),
            "rungs": self.rungs,
            "sizes": list(self.sizes),
            "mean_error": list(self.means),
            "se_error": list(self.ses),
        }


def fit_rate(sizes, means, ses=None):
    x = np.asarray(sizes, dtype=float)
    y = np.asarray(means, dtype=float)
    if x.shape != y.shape or x.size < 4:
        raise ValueError("rate fits need at least 4 rungs")
    if np.any(~np.isfinite(y)) or np.any(y <= 0):
        raise ValueError("mean errors must be positive and finite")
    lx, ly = np.log(x), np.log(y)
    res = stats.linregress(lx, ly)
    dof = x.size - 2
    se = float(res.stderr)
    tq = stats.t.ppf(0.975, dof)
    r2 = float(res.rvalue**2) if np.ptp(ly) > 0 else 1.0
    return RateFit(
        slope=float(res.slope),
        intercept=float(res.intercept),
        slope_se=float(se),
        r2=r2,
        ci=(float(res.slope - tq * se), float(res.slope + tq * se)),
        sizes=[int(v) for v in x],
        means=[float(v) for v in y],
        ses=[float(v) for v in (ses if ses is not None else np.zeros_like(y))],
    )
