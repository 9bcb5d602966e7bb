"""Mixture densities p_G, N-product mixtures, and divergences between mixtures."""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate, optimize
from scipy.special import comb, logsumexp

from .errors import UnsupportedError
from .kernels import KernelModel, make_kernel
from .measures import MixingMeasure

__all__ = [
    "MixtureModel",
    "ProductMixtureModel",
    "QuadratureConfig",
    "divergence",
    "product_divergence_v",
]


def _active(mixing):
    keep = mixing.weights > 0
    return mixing.atoms[keep], mixing.weights[keep]


@dataclass(frozen=True)
class MixtureModel:
    """``p_G(x) = sum_i p_i f(x | theta_i)``."""

    kernel: KernelModel
    mixing: MixingMeasure

    def __post_init__(self):
        object.__setattr__(self, "kernel", make_kernel(self.kernel))
        if self.mixing.dim != self.kernel.param_dim:
            raise ValueError(
                f"mixing atoms have dim {self.mixing.dim}, kernel expects {self.kernel.param_dim}"
            )
        for a in self.mixing.atoms:
            self.kernel.check_param(a)

    def component_logpdf(self, x):
        """(n, k) matrix of ``log p_i + log f(x | theta_i)`` over active components."""
        atoms, w = _active(self.mixing)
        x = np.asarray(x, dtype=float)
        cols = [np.log(wi) + self.kernel._logpdf(x, a) for a, wi in zip(atoms, w)]
        return np.stack(cols, axis=-1)

    def logpdf(self, x):
        return logsumexp(self.component_logpdf(x), axis=-1)

    def density(self, x):
        if self.kernel.discrete:
            atoms, w = _active(self.mixing)
            return sum(wi * self.kernel.density(x, a) for a, wi in zip(atoms, w))
        return np.exp(self.logpdf(x))

    def cdf(self, x):
        atoms, w = _active(self.mixing)
        return sum(wi * self.kernel.cdf(x, a) for a, wi in zip(atoms, w))

    def sample(self, rng, n, return_labels=False):
        labels = rng.choice(self.mixing.k, size=n, p=self.mixing.weights)
        counts = np.bincount(labels, minlength=self.mixing.k)
        shape = (n,) if self.kernel.x_dim == 1 else (n, self.kernel.x_dim)
        out = np.empty(shape)
        for i, c in enumerate(counts):
            if c:
                out[labels == i] = self.kernel.sample(self.mixing.atoms[i], rng, int(c))
        return (out, labels) if return_labels else out


@dataclass(frozen=True)
class ProductMixtureModel:
    """``P_{G,N} = sum_i p_i f(.|theta_i)^{(x) N}``: mixtures of exchangeable sequences."""

    kernel: KernelModel
    mixing: MixingMeasure
    N: int

    def __post_init__(self):
        object.__setattr__(self, "kernel", make_kernel(self.kernel))
        if int(self.N) < 1:
            raise ValueError("sequence length N must be >= 1")
        object.__setattr__(self, "N", int(self.N))
        MixtureModel(self.kernel, self.mixing)  # validates atoms

    @property
    def base(self):
        return MixtureModel(self.kernel, self.mixing)

    def _as_batch(self, xbar):
        x = np.asarray(xbar, dtype=float)
        single = x.ndim == (1 if self.kernel.x_dim == 1 else 2)
        if single:
            x = x[None]
        if x.shape[1] != self.N:
            raise ValueError(f"sequence length {x.shape[1]} != N={self.N}")
        return x, single

    def component_loglik(self, xbar):
        """(m, k): ``log p_i + sum_j log f(x_j | theta_i)`` per sequence."""
        x, _ = self._as_batch(xbar)
        atoms, w = _active(self.mixing)
        cols = [
            np.log(wi) + self.kernel._logpdf(x, a).sum(axis=1) for a, wi in zip(atoms, w)
        ]
        return np.stack(cols, axis=-1)

    def log_density(self, xbar):
        x, single = self._as_batch(xbar)
        out = logsumexp(self.component_loglik(x), axis=-1)
        return float(out[0]) if single else out

    def density(self, xbar):
        return np.exp(self.log_density(xbar))

    def sample_sequences(self, m, rng, return_labels=False):
        labels = rng.choice(self.mixing.k, size=m, p=self.mixing.weights)
        shape = (m, self.N) if self.kernel.x_dim == 1 else (m, self.N, self.kernel.x_dim)
        out = np.empty(shape)
        counts = np.bincount(labels, minlength=self.mixing.k)
        for i, c in enumerate(counts):
            if c:
                draws = self.kernel.sample(self.mixing.atoms[i], rng, int(c) * self.N)
                out[labels == i] = draws.reshape((int(c),) + shape[1:])
        return (out, labels) if return_labels else out

    def count_probabilities(self):
        """Bernoulli only: probability of one fixed sequence with c ones, c = 0..N."""
        if self.kernel.family != "bernoulli":
            raise UnsupportedError("count probabilities need a bernoulli kernel")
        c = np.arange(self.N + 1)
        atoms, w = _active(self.mixing)
        th = atoms[:, 0]
        with np.errstate(divide="ignore"):
            logp = (
                np.log(w)[:, None]
                + np.where(c[None] > 0, c[None] * np.log(np.where(th > 0, th, 1.0))[:, None], 0.0)
                + np.where(
                    self.N - c[None] > 0,
                    (self.N - c[None]) * np.log(np.where(th < 1, 1 - th, 1.0))[:, None],
                    0.0,
                )
            )
        # exact zeros for theta in {0, 1}
        zero = ((th[:, None] == 0) & (c[None] > 0)) | ((th[:, None] == 1) & (c[None] < self.N))
        logp = np.where(zero, -np.inf, logp)
        return np.exp(logsumexp(logp, axis=0))


@dataclass(frozen=True)
class QuadratureConfig:
    epsabs: float = 1e-13
    epsrel: float = 1e-11
    limit: int = 400
    grid_start: int = 32
    grid_max: int = 128
    grid_tol: float = 1e-8
    mc_samples: int = 200_000
    seed: int = 0


def _union_intervals(intervals):
    intervals = sorted(intervals)
    merged = [list(intervals[0])]
    for a, b in intervals[1:]:
        if a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return merged


def _pointwise(kind, lp, lq):
    """Integrand of the divergence from log densities ``lp``, ``lq``."""
    p = np.exp(lp)
    q = np.exp(lq)
    if kind == "V":
        return 0.5 * np.abs(p - q)
    if kind == "hellinger":
        return 0.5 * (np.sqrt(p) - np.sqrt(q)) ** 2
    if kind == "KL":
        with np.errstate(invalid="ignore"):
            out = p * (lp - lq)
        return np.where(p > 0, out, 0.0)
    raise ValueError(f"unknown divergence kind {kind!r}")


def _finish(kind, value):
    if kind == "hellinger":
        return math.sqrt(max(value, 0.0))
    return value


def divergence(P, Q, kind="V", integration=None, return_error=False):
    """Distance between two mixtures of the same kernel family.

    ``kind``: ``V`` (total variation, (1/2) int |p - q|), ``hellinger``
    (h = ((1/2) int (sqrt p - sqrt q)^2)^(1/2)), ``h2`` (its square) or ``KL``
    (int p log(p/q)). With ``return_error`` a ``(value, error_estimate)`` pair
    is returned; the Monte Carlo fallback for dimension > 3 reports its
    standard error there.
    """
    cfg = integration or QuadratureConfig()
    if P.kernel.family != Q.kernel.family:
        raise ValueError("mixtures use different kernel families")
    base_kind = "hellinger" if kind == "h2" else kind
    kernel = P.kernel

    if kernel.discrete:
        xs = np.array([0.0, 1.0])
        val = float(np.sum(_pointwise(base_kind, P.logpdf(xs), Q.logpdf(xs))))
        err = 0.0
    elif kernel.x_dim == 1:
        intervals = [kernel.support_interval(a) for a in P.mixing.atoms] + [
            kernel.support_interval(a) for a in Q.mixing.atoms
        ]
        f = lambda x: float(  # noqa: E731
            _pointwise(base_kind, P.logpdf(np.array([x])), Q.logpdf(np.array([x])))[0]
        )
        val = 0.0
        err = 0.0
        centres = [float(a[0]) for a in P.mixing.atoms] + [float(a[0]) for a in Q.mixing.atoms]
        for a, b in _union_intervals(intervals):
            pts = {c for c in centres if a < c < b}
            if base_kind == "V":
                pts.update(_sign_changes(P, Q, a, b))
            pts = sorted(pts)
            # roundoff can stall quad at these tolerances; its error estimate
            # stays available through return_error
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", integrate.IntegrationWarning)
                v, e = integrate.quad(
                    f, a, b, points=pts or None, epsabs=cfg.epsabs, epsrel=cfg.epsrel,
                    limit=cfg.limit,
                )
            val += v
            err += e
    elif kernel.x_dim <= 3:
        val, err = _grid_divergence(P, Q, base_kind, cfg)
    else:
        rng = np.random.default_rng(cfg.seed)
        x = P.sample(rng, cfg.mc_samples)
        lp, lq = P.logpdf(x), Q.logpdf(x)
        vals = _pointwise(base_kind, lp, lq) / np.exp(lp)
        val = float(vals.mean())
        err = float(vals.std(ddof=1) / math.sqrt(len(vals)))

    if kind == "h2":
        out = max(val, 0.0)
    else:
        out = _finish(base_kind, val)
    return (out, err) if return_error else out


def _sign_changes(P, Q, a, b, n=2001):
    """Roots of p - q on [a, b]: the kinks of |p - q|."""
    x = np.linspace(a, b, n)
    with np.errstate(invalid="ignore"):
        d = P.logpdf(x) - Q.logpdf(x)
    idx = np.flatnonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0)
    g = lambda t: float(P.logpdf(np.array([t]))[0] - Q.logpdf(np.array([t]))[0])  # noqa: E731
    roots = []
    for i in idx:
        if np.isfinite(d[i]) and np.isfinite(d[i + 1]):
            roots.append(optimize.brentq(g, x[i], x[i + 1], xtol=1e-14))
    return roots


def _grid_divergence(P, Q, kind, cfg):
    """Composite tensor Gauss-Legendre on the +-10 sd box around all atoms.

    Panels per axis are doubled until successive estimates agree to
    ``cfg.grid_tol`` or the point budget is exhausted.
    """
    kernel = P.kernel
    atoms = np.vstack([P.mixing.atoms, Q.mixing.atoms])
    sd = kernel.sd
    lo = atoms.min(axis=0) - 10 * sd
    hi = atoms.max(axis=0) + 10 * sd
    d = kernel.x_dim
    nodes, w = leggauss(8)
    prev = None
    panels = max(cfg.grid_start // 8, 1)
    while True:
        axes, wts = [], []
        for i in range(d):
            edges = np.linspace(lo[i], hi[i], panels + 1)
            half = 0.5 * np.diff(edges)
            mid = 0.5 * (edges[:-1] + edges[1:])
            axes.append((mid[:, None] + half[:, None] * nodes[None, :]).ravel())
            wts.append((half[:, None] * w[None, :]).ravel())
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        W = np.ones(1)
        for wi in wts:
            W = np.multiply.outer(W, wi)
        W = W.reshape(-1)
        val = float(W @ _pointwise(kind, P.logpdf(grid), Q.logpdf(grid)))
        if prev is not None and abs(val - prev) < cfg.grid_tol:
            return val, abs(val - prev)
        if 16 * panels > cfg.grid_max * 8 or (16 * panels) ** d > 4_000_000:
            return val, abs(val - prev) if prev is not None else float("nan")
        prev = val
        panels *= 2


def product_divergence_v(P, Q, mc_samples=200_000, rng=None, method="auto"):
    """Total variation between two N-product mixtures.

    Returns ``(estimate, std_error)``. Bernoulli kernels are summed exactly
    over the N + 1 count classes; otherwise a Monte Carlo estimate
    ``(1/2) E_R |p - q| / r`` under ``R = (P + Q) / 2`` is used.
    """
    if P.kernel.family != Q.kernel.family or P.N != Q.N:
        raise ValueError("product mixtures must share kernel family and N")
    if method == "auto":
        method = "exact" if P.kernel.family == "bernoulli" else "mc"
    if method == "exact":
        pc = P.count_probabilities()
        qc = Q.count_probabilities()
        binom = comb(P.N, np.arange(P.N + 1))
        return float(0.5 * np.sum(binom * np.abs(pc - qc))), 0.0
    if method != "mc":
        raise ValueError(f"unknown method {method!r}")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    from_p = rng.random(mc_samples) < 0.5
    n_p = int(from_p.sum())
    xs_p = P.sample_sequences(n_p, rng)
    xs_q = Q.sample_sequences(mc_samples - n_p, rng)
    x = np.concatenate([xs_p, xs_q], axis=0)
    lp = P.log_density(x)
    lq = Q.log_density(x)
    # (1/2)|p - q| / ((p + q)/2) = |tanh((lp - lq)/2)|
    vals = np.abs(np.tanh(0.5 * (lp - lq)))
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(mc_samples))


def enumerate_bernoulli_sequences(N):
    """All 2^N binary sequences as an array (used by exhaustive tests)."""
    return np.array(list(itertools.product([0.0, 1.0], repeat=N)))
