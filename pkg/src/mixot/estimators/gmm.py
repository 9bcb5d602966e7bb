"""Generalised method of moments for 1-D Gaussian location mixtures (known sigma).

``t_j`` is the polynomial whose expectation under N(theta, sigma^2) is
``(theta - c)^j``, found by inverting the lower-triangular map from powers of
theta to raw Gaussian moments.
"""

from __future__ import annotations

from math import comb

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import least_squares
from scipy.special import factorial2

from ..errors import UnsupportedError
from ..kernels import GaussianLocation, make_kernel
from ..measures import MixingMeasure
from .base import EstimateResult, EstimatorConfig
from .optimize import optimize_over_gk


def gaussian_moment_matrix(order, sigma):
    """C[j, i] with E[(X - c)^j] = sum_i C[j, i] (theta - c)^i, j, i <= order."""
    C = np.zeros((order + 1, order + 1))
    for j in range(order + 1):
        for i in range(j + 1):
            m = j - i
            if m % 2 == 0:
                zm = 1.0 if m == 0 else float(factorial2(m - 1))
                C[j, i] = comb(j, i) * sigma ** m * zm
    return C


def unbiased_moment_coefficients(order, sigma):
    """Row j holds the coefficients (in powers of x - c) of t_j."""
    C = gaussian_moment_matrix(order, sigma)
    return solve_triangular(C, np.eye(order + 1), lower=True)


def moment_statistics(x, order, sigma, center=0.0):
    """(n, order) matrix with column j-1 equal to t_j(x_i), j = 1..order."""
    A = unbiased_moment_coefficients(order, sigma)
    u = np.asarray(x, dtype=float).reshape(-1) - center
    V = np.vander(u, order + 1, increasing=True)
    return V @ A.T[:, 1:]


def _mixture_moments(atoms, weights, order, center):
    u = np.asarray(atoms, dtype=float).reshape(-1) - center
    return np.vander(u, order + 1, increasing=True)[:, 1:].T @ weights


def _gk_moments_fit(targets, k, lo, hi, center, cfg):
    order = 2 * k - 1
    targets = np.asarray(targets, dtype=float)

    def obj(atoms, w):
        return float(np.max(np.abs(_mixture_moments(atoms, w, order, center) - targets)))

    (atoms, w), value, diag = optimize_over_gk(obj, k, lo, hi, cfg.optimizer())
    polished = False

    def resid(z):
        a = z[:k]
        logits = np.append(z[k:], 0.0)
        p = np.exp(logits - logits.max())
        p /= p.sum()
        return _mixture_moments(a, p, order, center) - targets

    w_safe = np.clip(w, 1e-12, None)
    z0 = np.concatenate([np.clip(atoms[:, 0], lo[0], hi[0]),
                         np.log(w_safe[:-1]) - np.log(w_safe[-1])])
    lb = np.concatenate([np.full(k, lo[0]), np.full(k - 1, -30.0)])
    ub = np.concatenate([np.full(k, hi[0]), np.full(k - 1, 30.0)])
    z0 = np.clip(z0, lb, ub)
    try:
        res = least_squares(resid, z0, bounds=(lb, ub), xtol=1e-15, ftol=1e-15, gtol=1e-15,
                            max_nfev=2000)
        a2 = res.x[:k].reshape(k, 1)
        lg = np.append(res.x[k:], 0.0)
        p2 = np.exp(lg - lg.max())
        p2 /= p2.sum()
        v2 = obj(a2, p2)
        if cfg.weight_floor == 0 and v2 < value:
            atoms, w, value, polished = a2, p2, v2, True
    except ValueError:
        pass
    return atoms, w, value, dict(diag.to_dict(), polished=polished)


def gmm_estimate_from_moments(targets, kernel, cfg: EstimatorConfig | None = None):
    """Fit k atoms to target moments ``targets[j-1] = m_j(G - center)``, j <= 2k-1."""
    cfg = cfg or EstimatorConfig(estimator="gmm")
    kernel = _check_kernel(kernel)
    lo, hi = cfg.box(kernel)
    targets = np.asarray(targets, dtype=float)[: 2 * cfg.k - 1]
    atoms, w, value, diag = _gk_moments_fit(targets, cfg.k, lo, hi, cfg.center, cfg)
    return EstimateResult(MixingMeasure(atoms, w / w.sum()), value, dict(diag, estimator="gmm"))


def _check_kernel(kernel):
    kernel = make_kernel(kernel)
    if not isinstance(kernel, GaussianLocation) or kernel.d != 1:
        raise UnsupportedError(
            f"no unbiased moment statistics registered for {kernel.family} (d={kernel.x_dim})"
        )
    return kernel


def gmm_estimate(data, kernel, cfg: EstimatorConfig | None = None):
    cfg = cfg or EstimatorConfig(estimator="gmm")
    kernel = _check_kernel(kernel)
    x = np.asarray(data, dtype=float).reshape(-1)
    if x.size == 0:
        raise ValueError("empty data")
    T = moment_statistics(x, 2 * cfg.k - 1, kernel.sd[0], cfg.center)
    res = gmm_estimate_from_moments(T.mean(axis=0), kernel, cfg)
    res.diagnostics["n"] = int(x.size)
    return res
