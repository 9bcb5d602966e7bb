from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from ..errors import ConfigError, UnsupportedError
from ..kernels import GaussianLocation, make_kernel
from ..measures import moment_distance
from ..mixtures import MixtureModel
from .gmm import moment_statistics
from .mmd import mmd_distance

FAMILIES = ("ks-cdf", "mmd-rkhs", "monomial")
KS_GRID = 4096
KS_REFINE = 8


@dataclass(frozen=True)
class PhiClass:
    """A test-function class: KS half-lines, the RBF unit ball, or centred monomials."""

    family: str
    gamma: float | None = None
    center: float = 0.0
    k: int = 1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown Phi family {self.family!r}")
        if self.family == "mmd-rkhs" and not (self.gamma and self.gamma > 0):
            raise ConfigError("mmd-rkhs needs a positive bandwidth gamma")
        if self.k < 1:
            raise ConfigError("k must be >= 1")

    @property
    def order(self):
        return 2 * self.k - 1

    @property
    def estimatable(self):
        return self.family == "monomial"

    def evaluate(self, G, kernel):
        """G phi for every phi in a finite family (monomials: the moment vector)."""
        if self.family != "monomial":
            raise UnsupportedError(f"{self.family} has no finite evaluation vector")
        u = G.atoms[:, 0] - self.center
        return np.vander(u, self.order + 1, increasing=True)[:, 1:].T @ G.weights

    def statistic(self, x, kernel):
        """Unbiased t_phi(x) with E_{P_G} t_phi = G phi (columns follow ``evaluate``)."""
        kernel = make_kernel(kernel)
        if self.family != "monomial" or not isinstance(kernel, GaussianLocation) or kernel.d != 1:
            raise UnsupportedError("statistics are registered for monomials under 1-D gaussian-location")
        return moment_statistics(x, self.order, kernel.sd[0], self.center)


def _ks_grid_range(P, Q, data_range):
    if data_range is not None:
        return float(data_range[0]), float(data_range[1])
    lo, hi = np.inf, -np.inf
    for M in (P, Q):
        for a, w in zip(M.mixing.atoms, M.mixing.weights):
            if w > 0:
                a_lo, a_hi = M.kernel.support_interval(a)
                lo, hi = min(lo, a_lo), max(hi, a_hi)
    margin = 0.05 * (hi - lo)
    return lo - margin, hi + margin


def ks_distance(G, H, kernel, data_range=None):
    """sup_x |F_G(x) - F_H(x)|: dense grid plus golden-section refinement of the top maxima."""
    kernel = make_kernel(kernel)
    P, Q = MixtureModel(kernel, G), MixtureModel(kernel, H)
    if kernel.discrete:
        pts = np.array([0.0, 1.0])
        return float(np.max(np.abs(P.cdf(pts) - Q.cdf(pts))))
    if kernel.x_dim > 1:
        if not getattr(kernel, "diagonal", False):
            raise UnsupportedError("KS distance needs a 1-D kernel or diagonal covariance")
        axes = []
        per_axis = max(8, int(round(KS_GRID ** (1.0 / kernel.x_dim))))
        atoms = np.vstack([G.atoms, H.atoms])
        for j in range(kernel.x_dim):
            s = kernel.sd[j]
            axes.append(np.linspace(atoms[:, j].min() - 8 * s, atoms[:, j].max() + 8 * s, per_axis))
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, kernel.x_dim)
        return float(np.max(np.abs(P.cdf(pts) - Q.cdf(pts))))

    lo, hi = _ks_grid_range(P, Q, data_range)
    grid = np.linspace(lo, hi, KS_GRID)
    gap = np.abs(P.cdf(grid) - Q.cdf(grid))
    best = float(gap.max())
    # local maxima of the grid profile, largest first
    interior = np.flatnonzero((gap[1:-1] >= gap[:-2]) & (gap[1:-1] >= gap[2:])) + 1
    order = interior[np.argsort(gap[interior])[::-1]][:KS_REFINE]

    def neg(x):
        return -abs(float(P.cdf(np.array([x]))[0] - Q.cdf(np.array([x]))[0]))

    for i in order:
        a, m, b = grid[i - 1], grid[i], grid[i + 1]
        try:
            res = minimize_scalar(neg, bracket=(a, m, b), method="golden", tol=1e-10)
            best = max(best, -float(res.fun))
        except ValueError:
            # flat bracket: the grid value already is the local maximum
            pass
    return best


def phi_distance(phi: PhiClass, G, H, kernel, data_range=None):
    kernel = make_kernel(kernel)
    if phi.family == "ks-cdf":
        return ks_distance(G, H, kernel, data_range)
    if phi.family == "mmd-rkhs":
        if not isinstance(kernel, GaussianLocation):
            raise UnsupportedError("closed-form MMD needs a gaussian-location kernel")
        return mmd_distance(G, H, kernel.cov, phi.gamma)
    return moment_distance(G, H, np.full(G.dim, phi.center), phi.k)
