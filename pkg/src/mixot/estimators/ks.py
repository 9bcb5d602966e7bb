from __future__ import annotations

import numpy as np
from scipy import special

from ..errors import UnsupportedError
from ..kernels import GaussianLocation, make_kernel
from ..measures import MixingMeasure
from .base import EstimateResult, EstimatorConfig
from .optimize import optimize_over_gk


def _mixture_cdf(kernel, atoms, weights, x):
    if isinstance(kernel, GaussianLocation) and kernel.d == 1:
        z = (x[:, None] - np.asarray(atoms)[:, 0]) / kernel.sd[0]
        return special.ndtr(z) @ weights
    out = np.zeros(x.shape[0] if x.ndim > 1 and kernel.x_dim > 1 else x.shape)
    for a, w in zip(atoms, weights):
        if w > 0:
            out = out + w * kernel.cdf(x, a)
    return out


class KSObjective:
    """sup_x |F_G(x) - F_n(x)| over the empirical CDF breakpoints.

    One-dimensional data use both one-sided gaps at every distinct data value,
    which is exact for continuous kernels. Discrete kernels additionally use
    the left limit of F_G. Multivariate data (diagonal covariance only) are
    compared at the data points against the coordinatewise empirical CDF.
    """

    def __init__(self, data, kernel):
        self.kernel = kernel
        x = np.asarray(data, dtype=float)
        if x.size == 0:
            raise ValueError("empty data")
        if kernel.x_dim == 1:
            x = x.reshape(-1)
            n = x.size
            vals, counts = np.unique(x, return_counts=True)
            cum = np.cumsum(counts)
            self.points = vals
            self.upper = cum / n
            self.lower = (cum - counts) / n
            self.left = vals - 1e-9 * (1 + np.abs(vals)) if kernel.discrete else None
        else:
            if not getattr(kernel, "diagonal", False):
                raise UnsupportedError("multivariate KS needs a diagonal-covariance kernel")
            x = x.reshape(-1, kernel.x_dim)
            n = x.shape[0]
            le = np.zeros(n)
            lt = np.zeros(n)
            for start in range(0, n, 512):
                blk = x[start:start + 512]
                le[start:start + 512] = np.all(x[None, :, :] <= blk[:, None, :], axis=2).sum(1)
                lt[start:start + 512] = np.all(x[None, :, :] < blk[:, None, :], axis=2).sum(1)
            self.points = x
            self.upper = le / n
            self.lower = lt / n
            self.left = None
        self.n = n

    def __call__(self, atoms, weights):
        F = _mixture_cdf(self.kernel, atoms, weights, self.points)
        gap_hi = np.max(self.upper - F)
        if self.left is not None:
            F_left = _mixture_cdf(self.kernel, atoms, weights, self.left)
            gap_lo = np.max(F_left - self.lower)
            gap_hi = max(gap_hi, np.max(F - self.upper))
        else:
            gap_lo = np.max(F - self.lower)
        return float(max(gap_hi, gap_lo))


def min_ks_estimate(data, kernel, cfg: EstimatorConfig | None = None):
    cfg = cfg or EstimatorConfig()
    kernel = make_kernel(kernel)
    obj = KSObjective(data, kernel)
    lo, hi = cfg.box(kernel)
    (atoms, w), value, diag = optimize_over_gk(obj, cfg.k, lo, hi, cfg.optimizer())
    est = MixingMeasure(atoms, w / w.sum())
    return EstimateResult(est, value, dict(diag.to_dict(), estimator="min-ks", n=obj.n))
