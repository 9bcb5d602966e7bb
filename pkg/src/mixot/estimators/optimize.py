"""Multistart Nelder-Mead over G_k(Theta): k atoms in a box plus simplex weights.

Atoms are optimised in box-normalised coordinates; points outside the box are
clipped before the objective is called and charged a linear penalty on the
clipped distance. Weights use a softmax of k-1 free logits (the last logit is
pinned at zero), optionally shifted to respect a floor ``c0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from ..errors import EstimationError


@dataclass
class OptimizerSettings:
    n_starts: int = 8
    max_iter: int | None = None
    xatol: float = 1e-6
    fatol: float = 1e-10
    seed: int = 0
    weight_floor: float = 0.0
    penalty: float = 1e3
    polish: bool = True

    def __post_init__(self):
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")


@dataclass
class OptimizerDiagnostics:
    starts: int
    iterations: int
    evaluations: int
    converged: bool
    start_values: list = field(default_factory=list)

    def to_dict(self):
        return {
            "starts": self.starts,
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "converged": self.converged,
        }


class GkParametrization:
    """Maps a flat vector ``z`` to ``(atoms, weights)`` and back."""

    def __init__(self, k, lo, hi, weight_floor=0.0):
        self.k = int(k)
        self.lo = np.atleast_1d(np.asarray(lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(hi, dtype=float))
        self.q = self.lo.shape[0]
        self.span = self.hi - self.lo
        if weight_floor * self.k >= 1:
            raise ValueError("weight floor too large for k atoms")
        self.floor = float(weight_floor)
        self.n_atom = self.k * self.q
        self.dim = self.n_atom + self.k - 1

    def decode(self, z):
        u = z[: self.n_atom].reshape(self.k, self.q)
        uc = np.clip(u, 0.0, 1.0)
        excess = float(np.abs(u - uc).sum())
        atoms = self.lo + uc * self.span
        return atoms, self.weights(z[self.n_atom:]), excess

    def weights(self, logits):
        full = np.append(logits, 0.0)
        full = full - full.max()
        e = np.exp(full)
        p = e / e.sum()
        if self.floor > 0:
            p = self.floor + (1 - self.k * self.floor) * p
        return p

    def encode(self, atoms, weights):
        u = (np.asarray(atoms, dtype=float).reshape(self.k, self.q) - self.lo) / self.span
        w = np.asarray(weights, dtype=float)
        if self.floor > 0:
            w = (w - self.floor) / (1 - self.k * self.floor)
        w = np.clip(w, 1e-12, None)
        logits = np.clip(np.log(w[:-1]) - np.log(w[-1]), -20, 20)
        return np.concatenate([u.ravel(), logits])

    def random_starts(self, n, seed):
        # one stream for the hypercube design, one per start for its weights
        root = np.random.SeedSequence(seed)
        lhs_seq, *start_seqs = root.spawn(n + 1)
        lhs = qmc.LatinHypercube(d=self.n_atom, seed=np.random.default_rng(lhs_seq)).random(n)
        out = []
        for i in range(n):
            w = np.random.default_rng(start_seqs[i]).dirichlet(np.ones(self.k))
            logits = np.clip(np.log(w[:-1] + 1e-12) - np.log(w[-1] + 1e-12), -10, 10)
            out.append(np.concatenate([lhs[i], logits]))
        return out


def _simplex(z0, n_atom, step_atom, step_logit):
    dim = len(z0)
    simplex = np.tile(z0, (dim + 1, 1))
    for i in range(dim):
        step = step_atom if i < n_atom else step_logit
        if i < n_atom and z0[i] + step > 1.0:
            step = -step
        simplex[i + 1, i] += step
    return simplex


def optimize_over_gk(objective, k, lo, hi, settings=None, starts=None):
    """Minimise ``objective(atoms, weights)`` over mixing measures with k atoms.

    Returns ``((atoms, weights), value, diagnostics)``. ``starts`` optionally
    supplies extra ``(atoms, weights)`` initial points tried before the
    random Latin-hypercube / Dirichlet starts.
    """
    s = settings or OptimizerSettings()
    par = GkParametrization(k, lo, hi, s.weight_floor)

    def f(z):
        atoms, w, excess = par.decode(z)
        val = objective(atoms, w)
        if not np.isfinite(val):
            return np.inf
        return float(val) + s.penalty * excess

    z_starts = [par.encode(a, w) for a, w in (starts or [])]
    z_starts += par.random_starts(s.n_starts, s.seed)
    max_iter = s.max_iter or 400 * par.dim
    opts = dict(maxiter=max_iter, maxfev=2 * max_iter, xatol=s.xatol, fatol=s.fatol,
                adaptive=par.dim > 4)

    best = None
    iters = evals = 0
    finite_any = False
    start_values = []
    for z0 in z_starts:
        if not np.isfinite(f(z0)):
            start_values.append(float("inf"))
            continue
        finite_any = True
        res = minimize(f, z0, method="Nelder-Mead",
                       options=dict(opts, initial_simplex=_simplex(z0, par.n_atom, 0.1, 0.5)))
        iters += res.nit
        evals += res.nfev
        start_values.append(float(res.fun))
        if best is None or res.fun < best.fun:
            best = res
    if not finite_any or best is None or not np.isfinite(best.fun):
        raise EstimationError("objective is non-finite at every start")
    if s.polish:
        res = minimize(f, best.x, method="Nelder-Mead",
                       options=dict(opts, initial_simplex=_simplex(best.x, par.n_atom, 0.01, 0.05)))
        iters += res.nit
        evals += res.nfev
        if res.fun <= best.fun:
            best = res
    atoms, w, _ = par.decode(best.x)
    diag = OptimizerDiagnostics(
        starts=len(z_starts),
        iterations=int(iters),
        evaluations=int(evals),
        converged=bool(best.success),
        start_values=start_values,
    )
    return (atoms, w), objective(atoms, w), diag
