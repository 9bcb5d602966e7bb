"""Minimum-MMD estimation for Gaussian location mixtures with an RBF kernel.

With ker(x, y) = exp(-gamma |x - y|^2) and components N(theta, S):

    K(a, b)   = det(I + 4 gamma S)^(-1/2) exp(-gamma d' (I + 4 gamma S)^-1 d),  d = a - b
    J_n(a)    = mean_i det(I + 2 gamma S)^(-1/2) exp(-gamma r_i' (I + 2 gamma S)^-1 r_i),  r_i = a - X_i

Both follow from E exp(-gamma |Z|^2) for Gaussian Z.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize
from scipy.spatial.distance import pdist

from ..errors import ConfigError, UnsupportedError
from ..kernels import GaussianLocation, make_kernel
from ..measures import MixingMeasure
from .base import EstimateResult, EstimatorConfig
from .optimize import GkParametrization


def _check_gamma(gamma):
    if not (gamma > 0 and np.isfinite(gamma)):
        raise ConfigError(f"MMD bandwidth must be positive, got {gamma}")


def _gauss_factor(cov, gamma, mult):
    d = cov.shape[0]
    M = np.eye(d) + mult * gamma * cov
    return float(np.linalg.det(M) ** -0.5), np.linalg.inv(M)


def rbf_k_matrix(A, B, cov, gamma):
    """K(theta_a, theta_b) for rows of A (ka, d) and B (kb, d)."""
    _check_gamma(gamma)
    cov = np.atleast_2d(cov)
    c, Minv = _gauss_factor(cov, gamma, 4.0)
    A = np.asarray(A, dtype=float).reshape(-1, cov.shape[0])
    B = np.asarray(B, dtype=float).reshape(-1, cov.shape[0])
    D = A[:, None, :] - B[None, :, :]
    quad = np.einsum("abi,ij,abj->ab", D, Minv, D)
    return c * np.exp(-gamma * quad)


def rbf_j_vector(A, data, cov, gamma, return_grad=False):
    """J_n(theta_a) for rows of A; optionally the gradient wrt each theta_a."""
    _check_gamma(gamma)
    cov = np.atleast_2d(cov)
    d = cov.shape[0]
    c, Minv = _gauss_factor(cov, gamma, 2.0)
    A = np.asarray(A, dtype=float).reshape(-1, d)
    X = np.asarray(data, dtype=float).reshape(-1, d)
    R = A[:, None, :] - X[None, :, :]
    RM = R @ Minv
    e = c * np.exp(-gamma * np.einsum("ani,ani->an", RM, R))
    J = e.mean(axis=1)
    if not return_grad:
        return J
    grad = -2.0 * gamma * np.einsum("an,ani->ai", e, RM) / X.shape[0]
    return J, grad


def mmd_squared(G, H, cov, gamma):
    """Squared MMD between the Gaussian-location mixtures P_G and P_H."""
    gg = G.weights @ rbf_k_matrix(G.atoms, G.atoms, cov, gamma) @ G.weights
    hh = H.weights @ rbf_k_matrix(H.atoms, H.atoms, cov, gamma) @ H.weights
    gh = G.weights @ rbf_k_matrix(G.atoms, H.atoms, cov, gamma) @ H.weights
    return float(gg + hh - 2.0 * gh)


def mmd_distance(G, H, cov, gamma):
    return float(np.sqrt(max(mmd_squared(G, H, cov, gamma), 0.0)))


def median_heuristic_gamma(data, max_points=1000):
    """gamma = 1 / (2 median^2) of pairwise distances among the first points."""
    x = np.asarray(data, dtype=float)
    x = x.reshape(x.shape[0], -1)[:max_points]
    if x.shape[0] < 2:
        return 1.0
    med = float(np.median(pdist(x)))
    if med <= 0:
        return 1.0
    return 1.0 / (2.0 * med * med)


class MMDObjective:
    """pK p - 2 pJ_n: the squared MMD to the empirical measure minus its data-only term."""

    def __init__(self, data, kernel, gamma):
        _check_gamma(gamma)
        self.cov = kernel.cov
        self.d = kernel.d
        self.data = np.asarray(data, dtype=float).reshape(-1, self.d)
        if self.data.shape[0] == 0:
            raise ValueError("empty data")
        self.gamma = float(gamma)
        self.Minv_k = _gauss_factor(self.cov, self.gamma, 4.0)[1]

    def value_and_grad(self, atoms, p):
        K = rbf_k_matrix(atoms, atoms, self.cov, self.gamma)
        J, dJ = rbf_j_vector(atoms, self.data, self.cov, self.gamma, return_grad=True)
        val = float(p @ K @ p - 2.0 * p @ J)
        D = atoms[:, None, :] - atoms[None, :, :]
        dK = -2.0 * self.gamma * K[:, :, None] * (D @ self.Minv_k)
        g_atoms = 2.0 * p[:, None] * np.einsum("j,iju->iu", p, dK) - 2.0 * p[:, None] * dJ
        g_p = 2.0 * K @ p - 2.0 * J
        return val, g_atoms, g_p

    def __call__(self, atoms, p):
        return self.value_and_grad(np.asarray(atoms).reshape(-1, self.d), np.asarray(p))[0]


def min_mmd_estimate(data, kernel, gamma=None, cfg: EstimatorConfig | None = None):
    cfg = cfg or EstimatorConfig(estimator="min-mmd")
    kernel = make_kernel(kernel)
    if not isinstance(kernel, GaussianLocation):
        raise UnsupportedError("min-MMD estimator needs a gaussian-location kernel")
    if gamma is None:
        gamma = cfg.gamma
    if gamma is None:
        gamma = median_heuristic_gamma(data)
    obj = MMDObjective(data, kernel, gamma)
    lo, hi = cfg.box(kernel)
    k, d = cfg.k, kernel.d
    par = GkParametrization(k, lo, hi, cfg.weight_floor)
    floor = par.floor
    scale = 1.0 - k * floor

    def split(z):
        atoms = z[: k * d].reshape(k, d)
        return atoms, par.weights(z[k * d:])

    def fun(z):
        atoms, p = split(z)
        val, ga, gp = obj.value_and_grad(atoms, p)
        s = (p - floor) / scale if floor > 0 else p
        gs = scale * s * (gp - gp @ s) if floor > 0 else p * (gp - gp @ p)
        return val, np.concatenate([ga.ravel(), gs[:-1]])

    bounds = [(lo[j], hi[j]) for _ in range(k) for j in range(d)] + [(-20.0, 20.0)] * (k - 1)
    starts = par.random_starts(cfg.n_starts, cfg.seed)
    best = None
    iters = evals = 0
    for z0 in starts:
        atoms0, _, _ = par.decode(z0)
        x0 = np.concatenate([atoms0.ravel(), z0[k * d:]])
        res = minimize(fun, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                       options=dict(maxiter=cfg.max_iter or 2000, ftol=1e-15, gtol=1e-10))
        iters += res.nit
        evals += res.nfev
        if best is None or res.fun < best.fun:
            best = res
    atoms, p = split(best.x)
    est = MixingMeasure(atoms, p / p.sum())
    diag = dict(starts=len(starts), iterations=int(iters), evaluations=int(evals),
                converged=bool(best.success), estimator="min-mmd", gamma=float(gamma))
    return EstimateResult(est, float(best.fun), diag)
