from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from ..errors import EstimationError
from ..kernels import make_kernel
from ..measures import MixingMeasure
from .base import EstimateResult, EstimatorConfig


def _as_sequences(data, kernel, kind):
    x = np.asarray(data, dtype=float)
    if x.size == 0:
        raise ValueError("empty data")
    if kind == "plain":
        if kernel.x_dim == 1:
            return x.reshape(-1, 1)
        return x.reshape(-1, 1, kernel.x_dim)
    if kind == "product":
        if kernel.x_dim == 1:
            if x.ndim != 2:
                raise ValueError("product data must have shape (m, N)")
            return x
        if x.ndim != 3:
            raise ValueError("product data must have shape (m, N, d)")
        return x
    raise ValueError(f"unknown model kind {kind!r}")


def _kmeanspp(points, k, rng, span):
    """k-means++ seeding on parameter-space points scaled by the box span."""
    z = points / span
    m = z.shape[0]
    idx = [int(rng.integers(m))]
    d2 = np.sum((z - z[idx[0]]) ** 2, axis=1)
    for _ in range(1, k):
        tot = d2.sum()
        if tot <= 0:
            j = int(rng.integers(m))
        else:
            j = int(rng.choice(m, p=d2 / tot))
        idx.append(j)
        d2 = np.minimum(d2, np.sum((z - z[j]) ** 2, axis=1))
    return points[idx].copy()


class _EMRun:
    def __init__(self, x, kernel, k, lo, hi, max_iter, tol):
        self.x = x
        self.kernel = kernel
        self.k = k
        eps = 1e-9 * (hi - lo)
        self.lo = lo + eps
        self.hi = hi - eps
        self.max_iter = max_iter
        self.tol = tol

    def loglik_matrix(self, thetas, w):
        cols = []
        for t, wi in zip(thetas, w):
            lp = self.kernel._logpdf(self.x, t)
            cols.append(np.log(wi) + lp.reshape(lp.shape[0], -1).sum(axis=1))
        return np.stack(cols, axis=1)

    def run(self, thetas, w):
        """Returns (thetas, w, trace) or raises EstimationError on a degenerate component."""
        m = self.x.shape[0]
        trace = []
        for _ in range(self.max_iter):
            L = self.loglik_matrix(thetas, w)
            lse = logsumexp(L, axis=1)
            ll = float(lse.sum())
            if not np.isfinite(ll):
                raise EstimationError("non-finite log-likelihood")
            trace.append(ll)
            if len(trace) > 1 and trace[-1] - trace[-2] <= self.tol * (1 + abs(ll)):
                break
            R = np.exp(L - lse[:, None])
            mass = R.sum(axis=0)
            if np.any(mass < 1e-8 * m):
                raise EstimationError("degenerate responsibilities")
            w = mass / m
            thetas = np.array([
                np.clip(self.kernel.weighted_mle(self.x, R[:, i], thetas[i]), self.lo, self.hi)
                for i in range(self.k)
            ])
        else:
            L = self.loglik_matrix(thetas, w)
            trace.append(float(logsumexp(L, axis=1).sum()))
        return thetas, w, trace


def em_estimate(data, kernel, cfg: EstimatorConfig | None = None, kind="plain"):
    """EM for plain mixtures (``data`` of shape (n,) / (n, d)) or mixtures of
    N-fold products (``data`` of shape (m, N) / (m, N, d)), best of several
    k-means++ initialisations.
    """
    cfg = cfg or EstimatorConfig(estimator="em")
    kernel = make_kernel(kernel)
    x = _as_sequences(data, kernel, kind)
    lo, hi = cfg.box(kernel)
    span = hi - lo
    k = cfg.k
    runner = _EMRun(x, kernel, k, lo, hi, cfg.em_max_iter, cfg.em_tol)
    seeds = np.clip(kernel.seed_params(x), runner.lo, runner.hi)
    rng = np.random.default_rng(cfg.seed)

    best = None
    failures = 0
    attempts = 0
    iterations = 0
    max_attempts = 2 * cfg.em_restarts
    while attempts < max_attempts and attempts - failures < cfg.em_restarts:
        attempts += 1
        thetas = _kmeanspp(seeds, k, rng, span)
        if failures:
            thetas = np.clip(thetas + 0.01 * span * rng.standard_normal(thetas.shape),
                             runner.lo, runner.hi)
        w = np.full(k, 1.0 / k)
        try:
            th, wh, trace = runner.run(thetas, w)
        except EstimationError:
            failures += 1
            continue
        iterations += len(trace)
        if best is None or trace[-1] > best[2][-1]:
            best = (th, wh, trace)
    if best is None:
        raise EstimationError(f"EM failed: all {attempts} initialisations degenerate")
    th, wh, trace = best
    est = MixingMeasure(th, wh / wh.sum())
    diag = dict(starts=attempts, iterations=iterations, converged=len(trace) < cfg.em_max_iter + 1,
                failed_starts=failures, estimator="em", loglik=trace[-1], loglik_trace=trace)
    return EstimateResult(est, -trace[-1] / x.shape[0], diag)
