"""Numerical evidence for (non-)identifiability of mixture kernels.

Every probe returns plain numbers plus a verdict computed from explicit
thresholds. Absence-of-witness results are evidence, never proof, and are
flagged ``heuristic`` in their reports.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares
from scipy.special import factorial
from scipy.stats import binom

from .errors import ConfigError, UnsupportedError
from .estimators.phi import PhiClass, phi_distance
from .kernels import Gamma, GaussianLocation, GaussianLocationScale, SkewNormal, make_kernel
from .measures import MixingMeasure, d_n_metric, multi_indices, wasserstein
from .mixtures import MixtureModel, ProductMixtureModel, divergence, product_divergence_v
from .rng import stream

GRAM_POINTS = 4096
GRAM_FLOOR = 1e-8
STABILITY_FACTOR = 3.0
DECAY_SLOPE = 0.8


@dataclass
class ProbeReport:
    probe: str
    pairs: int
    min_ratio: float
    trajectory: list = field(default_factory=list)
    verdict: str = "inconclusive"
    thresholds: dict = field(default_factory=dict)
    heuristic: bool = False
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.min_ratio < 0:
            raise ValueError("ratios are non-negative")

    def to_dict(self):
        return {
            "probe": self.probe,
            "pairs": self.pairs,
            "min_ratio": self.min_ratio,
            "trajectory": [list(map(float, p)) for p in self.trajectory],
            "verdict": self.verdict,
            "thresholds": self.thresholds,
            "heuristic": self.heuristic,
            **self.extra,
        }


def trajectory_verdict(scales, ratios, factor=STABILITY_FACTOR, slope_floor=DECAY_SLOPE):
    """Classify ratios observed at shrinking scales.

    ``degenerate`` when log(ratio) falls with log(scale) at slope >= ``slope_floor``
    (ratio roughly proportional to the scale); ``bounded-away`` when no ratio
    drops below the first one divided by ``factor``; otherwise ``inconclusive``.
    """
    s = np.log(np.asarray(scales, dtype=float))
    r = np.asarray(ratios, dtype=float)
    if np.any(r <= 0) or len(r) < 2:
        return "degenerate" if np.any(r <= 0) else "inconclusive", float("nan")
    slope = float(np.polyfit(s, np.log(r), 1)[0])
    if slope >= slope_floor:
        return "degenerate", slope
    if r.min() >= r[0] / factor:
        return "bounded-away", slope
    return "inconclusive", slope


# -- strong identifiability ---------------------------------------------------


def _quadrature_points(kernel, atoms, n_points):
    if kernel.x_dim == 1:
        lo = min(kernel.support_interval(a)[0] for a in atoms)
        hi = max(kernel.support_interval(a)[1] for a in atoms)
        # Gauss-Legendre panels keep the weights positive and the nodes dense
        panels = max(1, n_points // 16)
        nodes, weights = np.polynomial.legendre.leggauss(16)
        edges = np.linspace(lo, hi, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        x = (mid[:, None] + half[:, None] * nodes[None]).ravel()
        w = (half[:, None] * weights[None]).ravel()
        return x, w
    per_axis = max(8, int(round(n_points ** (1.0 / kernel.x_dim))))
    sd = kernel.sd
    axes = [
        np.linspace(atoms[:, j].min() - 8 * sd[j], atoms[:, j].max() + 8 * sd[j], per_axis)
        for j in range(kernel.x_dim)
    ]
    x = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, kernel.x_dim)
    cell = np.prod([a[1] - a[0] for a in axes])
    return x, np.full(x.shape[0], cell)


def strong_identifiability_gram(kernel, m, atoms, n_points=GRAM_POINTS):
    """Minimum eigenvalue of the normalised Gram matrix of ``D^alpha f(.|theta_i)``.

    Returns ``(min_eigenvalue, verdict)`` with verdict ``independent`` above
    the 1e-8 floor and ``dependent`` otherwise.
    """
    kernel = make_kernel(kernel)
    if m not in (1, 2):
        raise ConfigError("order m must be 1 or 2")
    atoms = np.asarray(atoms, dtype=float).reshape(-1, kernel.param_dim)
    for a, b in itertools.combinations(atoms, 2):
        if np.linalg.norm(a - b) <= 1e-6:
            raise ValueError("atoms must be distinct")
    for a in atoms:
        kernel.check_param(a, interior=True)
    x, w = _quadrature_points(kernel, atoms, n_points)
    rows = []
    for a in atoms:
        for alpha in multi_indices(kernel.param_dim, m):
            rows.append(kernel.param_derivative(x, a, alpha))
    F = np.array(rows)
    gram = (F * w) @ F.T
    d = np.sqrt(np.diag(gram))
    if np.any(d <= 0):
        return 0.0, "dependent"
    corr = gram / np.outer(d, d)
    lam = float(np.linalg.eigvalsh(corr)[0])
    return lam, "independent" if lam > GRAM_FLOOR else "dependent"


# -- weak identifiability identities -----------------------------------------

PDE_TAGS = ("heat", "gamma-shift", "skew-normal-1", "skew-normal-2")


def _default_grid(kernel, theta, n=201):
    lo, hi = kernel.support_interval(theta)
    if isinstance(kernel, Gamma):
        lo = max(lo, 1e-6)
    return np.linspace(lo, hi, n)


def pde_residual(kernel, tag, theta, x=None, method=None):
    """Max absolute residual of a derivative identity at ``theta`` over ``x``.

    ``heat`` (location-scale gaussian, variance parametrisation) uses analytic
    derivatives; the others use finite differences unless ``method`` says otherwise.
    """
    kernel = make_kernel(kernel)
    t = kernel.check_param(theta, interior=True)
    x = _default_grid(kernel, t) if x is None else np.asarray(x, dtype=float)

    def d(alpha, how):
        return kernel.param_derivative(x, t, alpha, method=method or how)

    if tag == "heat" and isinstance(kernel, GaussianLocationScale):
        res = d((2, 0), "analytic") - 2 * d((0, 1), "analytic")
    elif tag == "gamma-shift" and isinstance(kernel, Gamma):
        a, b = t
        f = kernel.density(x, t)
        # unchecked evaluation: a + 1 may leave the configured box
        f_next = np.exp(kernel._logpdf(x, t + np.array([1.0, 0.0])))
        res = d((0, 1), "fd") - (a / b) * (f - f_next)
    elif tag == "skew-normal-1" and isinstance(kernel, SkewNormal):
        _, v, s = t
        res = d((2, 0, 0), "fd") - 2 * d((0, 1, 0), "fd") + (s**3 + s) / v * d((0, 0, 1), "fd")
    elif tag == "skew-normal-2" and isinstance(kernel, SkewNormal):
        _, v, s = t
        res = 2 * s * d((0, 0, 1), "fd") + (s * s + 1) * d((0, 0, 2), "fd") + 2 * v * s * d((0, 1, 1), "fd")
    else:
        raise UnsupportedError(f"identity {tag!r} is not registered for {kernel.family}")
    return float(np.max(np.abs(res)))


# -- inverse-bound ratio probes ----------------------------------------------


def _lift(G0, k):
    """Represent G0 with exactly k atoms by duplicating atoms at half weight."""
    atoms = [a for a in G0.atoms]
    weights = list(G0.weights)
    i = 0
    while len(atoms) < k:
        j = i % G0.k
        weights[j] /= 2
        atoms.append(G0.atoms[j].copy())
        weights.append(weights[j])
        i += 1
    return np.array(atoms), np.array(weights)


def _perturb(atoms, weights, rho, rng, kernel, split_offsets=None):
    k, q = atoms.shape
    span = kernel.hi - kernel.lo
    step = rng.standard_normal((k, q))
    step /= max(np.linalg.norm(step, axis=1).max(), 1e-12)
    new_atoms = atoms + rho * step
    if split_offsets is not None:
        new_atoms = atoms + rho * split_offsets
    dw = rng.standard_normal(k)
    dw -= dw.mean()
    dw /= max(np.abs(dw).max(), 1e-12)
    new_w = np.clip(weights + 0.5 * rho * dw * weights.min(), 1e-6, None)
    new_atoms = np.clip(new_atoms, kernel.lo + 1e-9 * span, kernel.hi - 1e-9 * span)
    return MixingMeasure(new_atoms, new_w / new_w.sum())


def _probe_pair(i, rho, base_atoms, base_w, k0, kernel, seed):
    rng = stream(seed, "pair", i)
    k, q = base_atoms.shape
    kind = i % 3
    if kind == 0:
        return _perturb(base_atoms, base_w, rho, rng, kernel), _perturb(
            base_atoms, base_w, rho, rng, kernel
        )
    if kind == 1 and k > k0:
        # split: each duplicated atom moves against its original
        v = rng.standard_normal(q)
        v /= np.linalg.norm(v)
        offs = np.zeros((k, q))
        for j in range(k0, k):
            src = (j - k0) % k0
            offs[j] = v
            offs[src] = -v
        G = _perturb(base_atoms, base_w, rho, rng, kernel, split_offsets=offs)
        H = _perturb(base_atoms, base_w, rho, rng, kernel, split_offsets=0.5 * offs)
        return G, H
    G = _perturb(base_atoms, base_w, rho, rng, kernel)
    return G, MixingMeasure(base_atoms, base_w)


def default_radius(G0):
    if G0.k < 2:
        return 0.2
    seps = [np.linalg.norm(a - b) for a, b in itertools.combinations(G0.atoms, 2)]
    return 0.2 * float(min(seps))


def inverse_bound_probe(kernel, phi: PhiClass, G0, k, radius=None, pair_budget=120,
                        seed=0, exponent=None, halvings=2, data_range=None):
    """Minimum of ``||G - H||_Phi / W_r^r(G, H)`` over pairs near ``G0`` at shrinking radii.

    The default exponent is ``2 d1 - 1`` with ``d1 = k - k0 + 1``. Pair ``i`` is
    generated from its own stream, so enlarging the budget can only lower the
    reported minimum.
    """
    kernel = make_kernel(kernel)
    k0 = G0.k
    if k < k0:
        raise ConfigError("ambient k must be >= number of atoms of G0")
    d1 = k - k0 + 1
    r = exponent if exponent is not None else 2 * d1 - 1
    radius = default_radius(G0) if radius is None else float(radius)
    base_atoms, base_w = _lift(G0, k)
    radii = [radius / 2**h for h in range(halvings + 1)]
    mins = []
    for rho in radii:
        best = np.inf
        for i in range(pair_budget):
            G, H = _probe_pair(i, rho, base_atoms, base_w, k0, kernel, seed)
            den = wasserstein(G, H, r=r)[0] ** r
            if den < 1e-14:
                continue
            best = min(best, phi_distance(phi, G, H, kernel, data_range) / den)
        mins.append(best)
    verdict, slope = trajectory_verdict(radii, mins)
    return ProbeReport(
        probe=f"inverse-bound/{phi.family}",
        pairs=pair_budget * len(radii),
        min_ratio=float(min(mins)),
        trajectory=list(zip(radii, mins)),
        verdict=verdict,
        thresholds={"stability_factor": STABILITY_FACTOR, "decay_slope": DECAY_SLOPE,
                    "exponent": r},
        extra={"slope": slope, "radius": radius},
    )


def escape_probe(phi: PhiClass, G0, box_radii=(10.0, 100.0, 1000.0), cov=1.0):
    """Move one atom of ``G0`` to the edge of ever larger boxes ``[-R, R]``.

    With a uniformly bounded Phi (KS) the ratio against W_1 shrinks like 1/R:
    compactness of the parameter space cannot be dropped.
    """
    ratios = []
    for R in box_radii:
        kernel = GaussianLocation(cov, lo=[-R], hi=[R])
        atoms = G0.atoms.copy()
        atoms[-1] = R
        G = MixingMeasure(atoms, G0.weights)
        ratios.append(phi_distance(phi, G, G0, kernel) / wasserstein(G, G0)[0])
    scales = [1.0 / R for R in box_radii]
    verdict, slope = trajectory_verdict(scales, ratios)
    return ProbeReport(
        probe="escape",
        pairs=len(box_radii),
        min_ratio=float(min(ratios)),
        trajectory=list(zip(box_radii, ratios)),
        verdict=verdict,
        thresholds={"decay_slope": DECAY_SLOPE},
        extra={"slope": slope},
    )


# -- gamma pathological set ----------------------------------------------------


def _pathological_pair(G0, tol=1e-9):
    for i, j in itertools.permutations(range(G0.k), 2):
        if np.allclose(G0.atoms[j] - G0.atoms[i], [1.0, 0.0], atol=tol):
            return i, j
    return None


def gamma_pathological_path(G0, t_grid=(1e-1, 3e-2, 1e-2, 3e-3, 1e-3), strict=True, kernel=None):
    """Ratio ``V(P_{G_t}, P_{G0}) / W_1(G_t, G0)`` along the degenerate direction.

    Atom i has beta shifted by t; mass ``p_i * alpha_i / beta_i * t`` moves from
    atom i to its partner at offset (1, 0), cancelling the first-order change
    of the density. With ``strict=False`` a G0 outside the pathological set is
    accepted (control runs); atoms 0 and 1 then play the two roles.
    """
    kernel = kernel or Gamma(lo=(0.2, 0.05), hi=(30.0, 30.0))
    pair = _pathological_pair(G0)
    if pair is None:
        if strict:
            raise ValueError("G0 has no pair of atoms at offset (1, 0)")
        pair = (0, 1)
    i, j = pair
    a_i, b_i = G0.atoms[i]
    p = G0.weights
    traj = []
    for t in sorted(t_grid, reverse=True):
        if t <= 0:
            continue
        atoms = G0.atoms.copy()
        atoms[i, 1] = b_i + t
        w = p.copy()
        c = p[i] * a_i / b_i * t
        w[i] -= c
        w[j] += c
        if w[i] <= 0:
            raise ValueError(f"t={t} too large for this G0")
        Gt = MixingMeasure(atoms, w)
        v = divergence(MixtureModel(kernel, Gt), MixtureModel(kernel, G0), "V")
        traj.append((t, v / wasserstein(Gt, G0)[0]))
    ts, ratios = zip(*traj)
    verdict, slope = trajectory_verdict(ts, ratios)
    return ProbeReport(
        probe="gamma-pathological" if strict or _pathological_pair(G0) else "gamma-control",
        pairs=len(traj),
        min_ratio=float(min(ratios)),
        trajectory=traj,
        verdict=verdict,
        thresholds={"decay_slope": DECAY_SLOPE, "stability_factor": STABILITY_FACTOR},
        extra={"slope": slope},
    )


# -- gaussian overfitting singularity system ---------------------------------


@dataclass
class SingularitySystem:
    """Unknowns ``(a_j, b_j, c_j)``, ``j = 1..gap+1``; equations for orders 1..r.

    Equation ``o`` reads ``sum_j c_j^2 sum_{n1 + 2 n2 = o} a_j^n1 b_j^n2 / (n1! n2!) = 0``.
    """

    gap: int
    r: int

    def __post_init__(self):
        if self.gap not in (1, 2):
            raise ConfigError("gap must be 1 or 2")
        if not 1 <= self.r <= 8:
            raise ConfigError("order r must be in 1..8")
        terms = [(o, n1, (o - n1) // 2) for o in range(1, self.r + 1)
                 for n1 in range(o + 1) if (o - n1) % 2 == 0]
        self._order = np.array([t[0] - 1 for t in terms])
        self._n1 = np.array([t[1] for t in terms], dtype=float)
        self._n2 = np.array([t[2] for t in terms], dtype=float)
        self._coef = 1.0 / (factorial(self._n1) * factorial(self._n2))
        self._sum = np.zeros((self.r, len(terms)))
        self._sum[self._order, np.arange(len(terms))] = 1.0

    @property
    def size(self):
        return self.gap + 1

    def _per_term(self, a, b):
        return self._coef[:, None] * a[None, :] ** self._n1[:, None] * b[None, :] ** self._n2[:, None]

    def residuals(self, a, b, c):
        c2 = np.asarray(c, dtype=float) ** 2
        return self._sum @ self._per_term(np.asarray(a, float), np.asarray(b, float)) @ c2

    def magnitudes(self, a, b, c):
        """Same sums with absolute values: the natural scale of each equation."""
        c2 = np.asarray(c, dtype=float) ** 2
        return self._sum @ self._per_term(np.abs(a), np.abs(b)) @ c2

    def relative_residuals(self, a, b, c):
        """Residuals divided by their magnitudes; invariant under the system's rescalings."""
        return self.residuals(a, b, c) / np.maximum(self.magnitudes(a, b, c), 1e-300)

    @staticmethod
    def nontrivial(a, b, c, tol=1e-8):
        return bool(np.all(np.abs(c) > tol) and np.any(np.abs(a) > tol))


def _batch_levenberg_marquardt(fun, Z, n_iter=300, tol=1e-30):
    """Levenberg-Marquardt run on every row of ``Z`` at once.

    ``fun`` maps (S, P) parameters to (S, m) residuals. Jacobians are forward
    differences. Per-row damping follows the usual accept/shrink, reject/grow rule.
    """
    S, P = Z.shape
    f = fun(Z)
    cost = np.sum(f * f, axis=1)
    lam = np.full(S, 1e-3)
    eye = np.eye(P)
    for _ in range(n_iter):
        active = (cost > tol) & (lam < 1e12)
        if not active.any():
            break
        Za, fa = Z[active], f[active]
        h = 1e-7 * (1.0 + np.abs(Za))
        J = np.empty(fa.shape + (P,))
        for j in range(P):
            Zp = Za.copy()
            Zp[:, j] += h[:, j]
            J[:, :, j] = (fun(Zp) - fa) / h[:, j, None]
        A = np.einsum("smp,smq->spq", J, J)
        g = np.einsum("smp,sm->sp", J, fa)
        diag = np.einsum("spp->sp", A)
        A = A + lam[active, None, None] * (diag[:, :, None] * eye + 1e-12 * eye)
        step = -(np.linalg.pinv(A) @ g[:, :, None])[:, :, 0]
        Zn = Za + step
        fn = fun(Zn)
        cn = np.sum(fn * fn, axis=1)
        ok = np.isfinite(cn) & (cn < cost[active])
        idx = np.flatnonzero(active)
        Z[idx[ok]] = Zn[ok]
        f[idx[ok]] = fn[ok]
        cost[idx[ok]] = cn[ok]
        lam[idx[ok]] = np.maximum(lam[idx[ok]] / 3.0, 1e-12)
        lam[idx[~ok]] *= 4.0
    return Z, cost


def singularity_system_probe(gap, r, budget=10_000, seed=0, tol=1e-10,
                             weight_floor=1e-2, b_bound=10.0, chunk=1000):
    """Multistart least squares for a nontrivial solution of the singularity system.

    The system is invariant under ``(a, b) -> (s a, s^2 b)`` and positive
    rescaling of ``c^2``, so ``|a| = 1`` and ``sum c^2 = 1`` (with floor) lose
    nothing; ``|b| <= b_bound`` keeps the search compact. Each equation is
    divided by its absolute-value counterpart, so near-solutions that only
    shrink the overall scale do not count. Found means the summed squared
    relative residual is below ``tol``. Starts run in vectorised batches;
    promising ones are polished with scipy's least squares. Returns
    ``(found, witness_or_None, report)``.
    """
    system = SingularitySystem(gap, r)
    n = system.size
    P = 3 * n - 1

    def unpack(Z):
        Z = np.atleast_2d(Z)
        logits = np.concatenate([Z[:, : n - 1], np.zeros((Z.shape[0], 1))], axis=1)
        e = np.exp(logits - logits.max(axis=1, keepdims=True))
        c2 = weight_floor + (1 - n * weight_floor) * e / e.sum(axis=1, keepdims=True)
        raw = Z[:, n - 1: 2 * n - 1]
        a = raw / np.maximum(np.linalg.norm(raw, axis=1, keepdims=True), 1e-300)
        b = b_bound * np.tanh(Z[:, 2 * n - 1:])
        return a, b, c2

    n1, n2, coef = system._n1, system._n2, system._coef

    def batch_resid(Z):
        a, b, c2 = unpack(Z)
        pa = a[:, None, :] ** n1[None, :, None]
        pb = b[:, None, :] ** n2[None, :, None]
        qa = np.abs(a)[:, None, :] ** n1[None, :, None]
        qb = np.abs(b)[:, None, :] ** n2[None, :, None]
        raw = np.einsum("stj,sj->st", coef[None, :, None] * pa * pb, c2) @ system._sum.T
        mag = np.einsum("stj,sj->st", coef[None, :, None] * qa * qb, c2) @ system._sum.T
        return raw / np.maximum(mag, 1e-300)

    def resid(z):
        return batch_resid(z[None])[0]

    best = np.inf
    starts = 0
    witness = None
    for lo in range(0, budget, chunk):
        ids = range(lo, min(lo + chunk, budget))
        Z0 = []
        for s in ids:
            rng = stream(seed, "singularity", gap, r, s)
            Z0.append(np.concatenate([rng.normal(0, 1, n - 1), rng.normal(0, 1, n),
                                      rng.normal(0, 0.7, n)]))
        Z, cost = _batch_levenberg_marquardt(batch_resid, np.array(Z0))
        for i in np.argsort(cost, kind="stable")[:20]:
            if cost[i] > 1e-4:
                break
            res = least_squares(resid, Z[i], xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=200 * P)
            if res.cost * 2 < cost[i]:
                cost[i] = 2 * res.cost
                Z[i] = res.x
        best = min(best, float(cost.min()))
        hits = [i for i in np.flatnonzero(cost < tol)]
        for i in hits:
            a, b, c2 = (v[0] for v in unpack(Z[i]))
            c = np.sqrt(c2)
            if SingularitySystem.nontrivial(a, b, c):
                witness = {"a": a.tolist(), "b": b.tolist(), "c": c.tolist(),
                           "residual": float(np.sum(system.residuals(a, b, c) ** 2))}
                starts = lo + int(i) + 1
                break
        if witness is not None:
            break
        starts = ids[-1] + 1
    found = witness is not None
    report = ProbeReport(
        probe=f"singularity/gap={gap}/r={r}",
        pairs=starts,
        min_ratio=float(best),
        verdict="solution-found" if found else "no-solution-found",
        thresholds={"residual_tol": tol, "weight_floor": weight_floor, "b_bound": b_bound},
        heuristic=not found,
        extra={"found": found, "witness": witness},
    )
    return found, witness, report


# -- mixtures of products -------------------------------------------------------


def _count_law(theta, p, N):
    c = np.arange(N + 1)
    return binom.pmf(c[:, None], N, np.asarray(theta)[None, :]) @ np.asarray(p)


def product_identifiability_probe(G0, N, budget=200, seed=0, separation=0.05, tol=1e-10,
                                  penalty=10.0):
    """Search for ``G' != G0`` in G_k with ``P_{G',N} = P_{G0,N}`` (bernoulli kernel).

    Exact count-class laws make the total variation an (N+1)-term sum. ``G'`` is
    kept at W_1 distance >= ``separation`` from ``G0`` by a hinge penalty.
    Returns ``(found, witness_or_None, report)``.
    """
    k = G0.k
    if G0.dim != 1 or np.any(G0.atoms < 0) or np.any(G0.atoms > 1):
        raise ConfigError("G0 must be a bernoulli mixing measure")
    target = _count_law(G0.atoms[:, 0], G0.weights, N)

    def unpack(z):
        th = z[:k]
        lg = np.append(z[k:], 0.0)
        e = np.exp(lg - lg.max())
        return th, e / e.sum()

    def resid(z):
        th, p = unpack(z)
        # aim slightly past the floor: the hinge otherwise settles just inside it
        gap = 1.1 * separation - wasserstein(MixingMeasure(th[:, None], p), G0)[0]
        return np.append(_count_law(th, p, N) - target, penalty * max(gap, 0.0))

    lb = np.concatenate([np.zeros(k), np.full(k - 1, -20.0)])
    ub = np.concatenate([np.ones(k), np.full(k - 1, 20.0)])
    best_tv = np.inf
    witness = None
    starts = 0
    for s in range(budget):
        rng = stream(seed, "product-ident", N, s)
        w = rng.dirichlet(np.ones(k))
        z0 = np.concatenate([rng.random(k), np.log(w[:-1]) - np.log(w[-1])])
        z0 = np.clip(z0, lb + 1e-12, ub - 1e-12)
        starts += 1
        res = least_squares(resid, z0, bounds=(lb, ub), xtol=1e-15, ftol=1e-15, gtol=1e-15,
                            max_nfev=500)
        th, p = unpack(res.x)
        G = MixingMeasure(th[:, None], p)
        if wasserstein(G, G0)[0] < separation * (1 - 1e-9):
            continue
        tv = 0.5 * float(np.abs(_count_law(th, p, N) - target).sum())
        best_tv = min(best_tv, tv)
        if tv < tol:
            witness = G
            break
    found = witness is not None
    report = ProbeReport(
        probe=f"product-identifiability/N={N}",
        pairs=starts,
        min_ratio=float(best_tv) if np.isfinite(best_tv) else 0.0,
        verdict="matching-measure-found" if found else "no-match-found",
        thresholds={"tv_tol": tol, "separation": separation},
        heuristic=not found,
        extra={"found": found, "witness": witness.to_dict() if found else None,
               "min_tv": float(best_tv)},
    )
    return found, witness, report


def _score_matrix(kernel, G0, N, x):
    """Columns: d/dz log-likelihood ratio directions (atoms, then sum-zero weights)."""
    model = ProductMixtureModel(kernel, G0, N)
    ld = model.log_density(x)
    cols = []
    for i, a in enumerate(G0.atoms):
        lf = kernel._logpdf(x, a).reshape(x.shape[0], -1).sum(axis=1)
        share = np.exp(np.log(G0.weights[i]) + lf - ld)
        f1 = np.exp(kernel._logpdf(x, a))
        for c in range(kernel.param_dim):
            e = tuple(int(c == j) for j in range(kernel.param_dim))
            dlog = kernel.param_derivative(x, a, e) / f1
            cols.append(share * dlog.reshape(x.shape[0], -1).sum(axis=1))
    comp = []
    for i, a in enumerate(G0.atoms):
        lf = kernel._logpdf(x, a).reshape(x.shape[0], -1).sum(axis=1)
        comp.append(np.exp(lf - ld))
    comp = np.array(comp).T
    # orthonormal basis of sum-zero weight perturbations
    k = G0.k
    Q, _ = np.linalg.qr(np.eye(k) - 1.0 / k)
    B = Q[:, : k - 1]
    S = np.column_stack(cols + [comp @ B[:, j] for j in range(k - 1)])
    return S, B


def n1_probe(kernel, G0, N_range=(1, 2, 3), t_grid=(1e-1, 1e-2, 1e-3), seed=0,
             mc_samples=100_000, gram_samples=20_000):
    """Smallest N whose first-order ratio ``V(P_{G,N}, P_{G0,N}) / D_1(G, G0)`` stays bounded.

    For each N the most adversarial first-order direction is the eigenvector of
    the smallest eigenvalue of the score Gram matrix under ``P_{G0,N}``; the
    ratio is then followed along ``G0 + t u`` for shrinking t. Returns
    ``(n1 or None, per-N reports)``.
    """
    kernel = make_kernel(kernel)
    k, q = G0.k, G0.dim
    reports = []
    for N in N_range:
        model0 = ProductMixtureModel(kernel, G0, N)
        x = model0.sample_sequences(gram_samples, stream(seed, "n1-gram", N))
        S, B = _score_matrix(kernel, G0, N, x)
        M = S.T @ S / S.shape[0]
        scale = np.sqrt(np.diag(M))
        scale[scale == 0] = 1.0
        lam, vec = np.linalg.eigh(M / np.outer(scale, scale))
        u = vec[:, 0] / scale
        u /= np.linalg.norm(u)
        d_atoms = u[: k * q].reshape(k, q)
        d_w = B @ u[k * q:]
        traj = []
        for t in sorted(t_grid, reverse=True):
            atoms = G0.atoms + t * d_atoms
            w = G0.weights + t * d_w
            if np.any(w <= 0):
                continue
            atoms = np.clip(atoms, kernel.lo, kernel.hi)
            Gt = MixingMeasure(atoms, w / w.sum())
            P = ProductMixtureModel(kernel, Gt, N)
            if N == 1 and kernel.x_dim == 1 and not kernel.discrete:
                v = divergence(P.base, model0.base, "V")
            else:
                v, _ = product_divergence_v(P, model0, mc_samples=mc_samples,
                                            rng=stream(seed, "n1-tv", N))
            traj.append((t, v / d_n_metric(Gt, G0, 1.0)))
        ts, ratios = zip(*traj)
        verdict, slope = trajectory_verdict(ts, ratios)
        reports.append(ProbeReport(
            probe=f"n1/N={N}",
            pairs=len(traj),
            min_ratio=float(min(ratios)),
            trajectory=traj,
            verdict=verdict,
            thresholds={"decay_slope": DECAY_SLOPE, "stability_factor": STABILITY_FACTOR},
            extra={"N": N, "slope": slope, "gram_min_eig": float(lam[0])},
        ))
        if verdict == "bounded-away":
            return N, reports
    return None, reports


__all__ = [
    "PDE_TAGS",
    "ProbeReport",
    "SingularitySystem",
    "default_radius",
    "escape_probe",
    "gamma_pathological_path",
    "inverse_bound_probe",
    "n1_probe",
    "pde_residual",
    "product_identifiability_probe",
    "singularity_system_probe",
    "strong_identifiability_gram",
    "trajectory_verdict",
]
