"""Discrete mixing measures and optimal-transport distances between them.

A :class:`MixingMeasure` is a finitely supported probability measure
``G = sum_i p_i delta_{theta_i}`` on a parameter space in R^q. All distances
here are computed exactly: transport problems are tiny (k <= 200), so an
LP / assignment solve is preferred over entropic approximations.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog
from scipy.sparse import coo_matrix, vstack
from scipy.spatial.distance import cdist

WEIGHT_TOL = 1e-12
MERGE_TOL = 1e-12
PLAN_TOL = 1e-9
MAX_BRUTE_K = 8
MAX_MOMENT_ENTRIES = 100_000

__all__ = [
    "MixingMeasure",
    "TransportPlan",
    "MeasureOfMeasures",
    "MomentVector",
    "transport",
    "wasserstein",
    "wasserstein_equal_weight_bruteforce",
    "d_n_metric",
    "nested_wasserstein",
    "mean_measure",
    "composite_transport",
    "moment_vector",
    "moment_distance",
    "multi_indices",
]


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MixingMeasure:
    """Finitely supported probability measure on R^q.

    ``atoms`` has shape (k, q); a 1-D sequence is read as k scalar atoms.
    Atoms need not be distinct; use :meth:`canonicalize` to merge them.
    """

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.ndim == 0:
            atoms = atoms.reshape(1, 1)
        elif atoms.ndim == 1:
            atoms = atoms[:, None]
        if atoms.ndim != 2:
            raise ValueError(f"atoms must be (k, q), got shape {atoms.shape}")
        weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if weights.ndim != 1 or weights.shape[0] != atoms.shape[0]:
            raise ValueError(
                f"{weights.shape[0]} weights for {atoms.shape[0]} atoms"
            )
        if atoms.shape[0] == 0:
            raise ValueError("a mixing measure needs at least one atom")
        if not np.all(np.isfinite(atoms)) or not np.all(np.isfinite(weights)):
            raise ValueError("atoms and weights must be finite")
        if np.any(weights < 0):
            raise ValueError("weights must be non-negative")
        if abs(weights.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {weights.sum():.17g}, not 1")
        object.__setattr__(self, "atoms", _frozen(atoms))
        object.__setattr__(self, "weights", _frozen(weights))

    @classmethod
    def from_unnormalized(cls, atoms, weights):
        w = np.asarray(weights, dtype=float)
        return cls(atoms, w / w.sum())

    @classmethod
    def dirac(cls, theta):
        return cls(np.atleast_2d(np.asarray(theta, dtype=float)), [1.0])

    @classmethod
    def uniform(cls, atoms):
        atoms = np.asarray(atoms, dtype=float)
        k = atoms.shape[0]
        return cls(atoms, np.full(k, 1.0 / k))

    @classmethod
    def from_dict(cls, d):
        return cls(d["atoms"], d["weights"])

    def to_dict(self):
        return {"atoms": self.atoms.tolist(), "weights": self.weights.tolist()}

    @property
    def k(self):
        return self.atoms.shape[0]

    @property
    def dim(self):
        return self.atoms.shape[1]

    def canonicalize(self, tol=MERGE_TOL, drop_below=0.0):
        """Merge atoms closer than ``tol`` and drop weights ``<= drop_below``.

        Merged atoms keep the position of the first member of each group.
        """
        keep = self.weights > drop_below
        if not np.any(keep):
            keep = self.weights == self.weights.max()
        atoms = self.atoms[keep]
        weights = self.weights[keep]
        k = atoms.shape[0]
        group = list(range(k))
        if k > 1:
            d = cdist(atoms, atoms)
            for i in range(k):
                if group[i] != i:
                    continue
                for j in range(i + 1, k):
                    if group[j] == j and d[i, j] < tol:
                        group[j] = i
        reps = sorted(set(group))
        new_atoms = atoms[reps]
        new_w = np.array([weights[np.asarray(group) == r].sum() for r in reps])
        return MixingMeasure(new_atoms, new_w / new_w.sum())

    def shifted(self, theta0):
        return MixingMeasure(self.atoms - np.asarray(theta0, dtype=float), self.weights)

    def sorted(self):
        """Atoms in lexicographic order (a canonical labelling)."""
        order = np.lexsort(self.atoms.T[::-1])
        return MixingMeasure(self.atoms[order], self.weights[order])

    def __repr__(self):
        pairs = ", ".join(
            f"{w:.4g}@{np.array2string(a, precision=4)}"
            for a, w in zip(self.atoms, self.weights)
        )
        return f"MixingMeasure({pairs})"


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Coupling between two discrete measures together with its cost."""

    flow: np.ndarray
    source: np.ndarray
    target: np.ndarray
    cost_matrix: np.ndarray
    total_cost: float

    def check(self, tol=PLAN_TOL):
        """Raise ``AssertionError`` if marginals or cost are off by more than ``tol``."""
        assert np.all(self.flow >= -tol)
        assert np.allclose(self.flow.sum(axis=1), self.source, atol=tol, rtol=0)
        assert np.allclose(self.flow.sum(axis=0), self.target, atol=tol, rtol=0)
        c = float(np.sum(self.flow * self.cost_matrix))
        assert abs(c - self.total_cost) <= tol * max(1.0, abs(c))


@dataclass(frozen=True, eq=False)
class MeasureOfMeasures:
    """Finitely supported probability measure whose atoms are mixing measures."""

    inner: tuple
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        inner = tuple(self.inner)
        if not inner:
            raise ValueError("need at least one inner measure")
        if self.weights is None:
            w = np.full(len(inner), 1.0 / len(inner))
        else:
            w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if w.shape[0] != len(inner):
            raise ValueError("one outer weight per inner measure")
        if np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError("outer weights must be a probability vector")
        dims = {g.dim for g in inner}
        if len(dims) != 1:
            raise ValueError("inner measures live in different dimensions")
        object.__setattr__(self, "inner", inner)
        object.__setattr__(self, "weights", _frozen(w))


@dataclass(frozen=True, eq=False)
class MomentVector:
    """Moments ``m_alpha(G - center)`` for every multi-index with ``|alpha| <= max_order``."""

    center: np.ndarray
    max_order: int
    indices: tuple
    values: np.ndarray

    def __getitem__(self, alpha):
        if isinstance(alpha, int):
            alpha = (alpha,)
        return self.values[self.indices.index(tuple(alpha))]

    def as_dict(self):
        return dict(zip(self.indices, self.values.tolist()))


# --------------------------------------------------------------------------
# transport core


def _north_west(a_sorted, b_sorted):
    """Monotone coupling of two 1-D histograms given in sorted atom order."""
    ka, kb = len(a_sorted), len(b_sorted)
    flow = np.zeros((ka, kb))
    a = a_sorted.astype(float).copy()
    b = b_sorted.astype(float).copy()
    i = j = 0
    while i < ka and j < kb:
        m = min(a[i], b[j])
        flow[i, j] += m
        a[i] -= m
        b[j] -= m
        if a[i] <= b[j]:
            i += 1
        else:
            j += 1
    return flow


def _solve_lp(cost, a, b):
    ka, kb = cost.shape
    rows = np.repeat(np.arange(ka), kb)
    cols = np.arange(ka * kb)
    row_c = coo_matrix((np.ones(ka * kb), (rows, cols)), shape=(ka, ka * kb))
    cols_t = np.tile(np.arange(kb), ka)
    col_c = coo_matrix((np.ones(ka * kb), (cols_t, cols)), shape=(kb, ka * kb))
    # one marginal constraint is redundant
    A = vstack([row_c, col_c.tocsr()[:-1]]).tocsr()
    rhs = np.concatenate([a, b[:-1]])
    res = linprog(
        cost.ravel(),
        A_eq=A,
        b_eq=rhs,
        bounds=(0, None),
        method="highs-ds",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return np.clip(res.x.reshape(ka, kb), 0.0, None)


def transport(cost, a, b, method="auto"):
    """Exact optimal transport between histograms ``a`` and ``b``.

    Returns ``(total_cost, plan)``. ``method`` is one of ``auto``,
    ``assignment`` (requires uniform equal-size histograms) or ``lp``.
    """
    cost = np.asarray(cost, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ka, kb = cost.shape
    if method == "auto":
        uniform = ka == kb and np.allclose(a, 1.0 / ka, atol=1e-15) and np.allclose(
            b, 1.0 / kb, atol=1e-15
        )
        if ka == 1 or kb == 1:
            method = "trivial"
        elif uniform:
            method = "assignment"
        else:
            method = "lp"
    if method == "trivial":
        flow = b[None, :].copy() if ka == 1 else a[:, None].copy()
    elif method == "assignment":
        ri, ci = linear_sum_assignment(cost)
        flow = np.zeros_like(cost)
        flow[ri, ci] = 1.0 / ka
    elif method == "lp":
        flow = _solve_lp(cost, a, b)
    else:
        raise ValueError(f"unknown transport method {method!r}")
    total = float(np.sum(flow * cost))
    return total, TransportPlan(flow, a, b, cost, total)


def _euclidean(A, B):
    return cdist(A, B)


def wasserstein(G, H, r=1.0, ground_metric=None, method="auto"):
    """Order-``r`` Wasserstein distance between two mixing measures.

    ``ground_metric(A, B)`` maps atom arrays (k, q), (k', q) to a distance
    matrix; Euclidean by default. Returns ``(value, plan)``.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    if G.dim != H.dim:
        raise ValueError(f"dimension mismatch: {G.dim} vs {H.dim}")
    metric = ground_metric or _euclidean
    d = np.asarray(metric(G.atoms, H.atoms), dtype=float)
    cost = d**r
    if ground_metric is None and G.dim == 1 and method == "auto":
        # monotone coupling is optimal for convex costs on the line
        oa = np.argsort(G.atoms[:, 0], kind="stable")
        ob = np.argsort(H.atoms[:, 0], kind="stable")
        flow_sorted = _north_west(G.weights[oa], H.weights[ob])
        flow = np.zeros_like(cost)
        flow[np.ix_(oa, ob)] = flow_sorted
        total = float(np.sum(flow * cost))
        plan = TransportPlan(flow, G.weights, H.weights, cost, total)
    else:
        total, plan = transport(cost, G.weights, H.weights, method=method)
    return max(total, 0.0) ** (1.0 / r), plan


def wasserstein_equal_weight_bruteforce(G, H, r=1.0):
    """Exact W_r between equal-weight measures by enumerating all k! matchings."""
    k = G.k
    if H.k != k:
        raise ValueError("both measures need the same number of atoms")
    if not (np.allclose(G.weights, 1.0 / k) and np.allclose(H.weights, 1.0 / k)):
        raise ValueError("weights must all equal 1/k")
    if k > MAX_BRUTE_K:
        raise ValueError(f"k={k} > {MAX_BRUTE_K}: refusing factorial enumeration")
    c = cdist(G.atoms, H.atoms) ** r
    best = min(
        sum(c[i, perm[i]] for i in range(k)) for perm in itertools.permutations(range(k))
    )
    return (best / k) ** (1.0 / r)


def d_n_metric(G, H, n_weight=1.0):
    """Permutation-minimised ``sum_i sqrt(N)|theta - theta'| + |p - p'|``.

    Defined only when both measures have the same number of atoms. ``G``
    and ``H`` are used as given (not canonicalized).
    """
    if G.k != H.k:
        raise ValueError(f"D_N needs equal atom counts, got {G.k} and {H.k}")
    if n_weight < 1:
        raise ValueError("n_weight must be >= 1")
    cost = math.sqrt(n_weight) * cdist(G.atoms, H.atoms) + np.abs(
        G.weights[:, None] - H.weights[None, :]
    )
    k = G.k
    if k <= MAX_BRUTE_K:
        return float(
            min(
                sum(cost[perm[i], i] for i in range(k))
                for perm in itertools.permutations(range(k))
            )
        )
    ri, ci = linear_sum_assignment(cost)
    return float(cost[ri, ci].sum())


def nested_wasserstein(D, E, r=1.0):
    """Wasserstein distance between measures of measures, ground cost ``W_r^r``."""
    cost = np.array(
        [[wasserstein(g, h, r)[0] ** r for h in E.inner] for g in D.inner]
    )
    total, _ = transport(cost, D.weights, E.weights)
    return max(total, 0.0) ** (1.0 / r)


def mean_measure(D):
    """The mixing measure ``sum_j w_j G_j`` obtained by averaging the inner measures."""
    atoms = np.concatenate([g.atoms for g in D.inner], axis=0)
    weights = np.concatenate([w * g.weights for w, g in zip(D.weights, D.inner)])
    return MixingMeasure.from_unnormalized(atoms, weights).canonicalize()


def composite_transport(G, H, ground_cost):
    """Optimal transport value (no root) with a user ground cost between atoms."""
    cost = np.array([[float(ground_cost(a, b)) for b in H.atoms] for a in G.atoms])
    if np.any(cost < 0) or not np.all(np.isfinite(cost)):
        raise ValueError("ground_cost must return finite non-negative values")
    total, _ = transport(cost, G.weights, H.weights)
    return total


# --------------------------------------------------------------------------
# moments


def multi_indices(q, max_order):
    """All alpha in N^q with |alpha| <= max_order, graded then lexicographic."""
    n = math.comb(q + max_order, q)
    if n > MAX_MOMENT_ENTRIES:
        raise ValueError(f"{n} multi-indices exceed the {MAX_MOMENT_ENTRIES} cap")
    out = []
    for order in range(max_order + 1):
        for combo in itertools.combinations_with_replacement(range(q), order):
            alpha = [0] * q
            for c in combo:
                alpha[c] += 1
            out.append(tuple(alpha))
    return out


def moment_vector(G, theta0=None, max_order=1):
    theta0 = np.zeros(G.dim) if theta0 is None else np.atleast_1d(np.asarray(theta0, float))
    idx = multi_indices(G.dim, max_order)
    centred = G.atoms - theta0
    powers = np.array(idx, dtype=float)  # (m, q)
    # (k, m): prod_c centred[i, c] ** alpha[c]
    mono = np.prod(centred[:, None, :] ** powers[None, :, :], axis=2)
    values = G.weights @ mono
    return MomentVector(_frozen(theta0), int(max_order), tuple(idx), _frozen(values))


def moment_distance(G, H, theta0=None, k=1):
    """Sup-norm gap between the moment vectors of G and H up to order 2k-1."""
    if G.dim != H.dim:
        raise ValueError("dimension mismatch")
    order = 2 * k - 1
    mg = moment_vector(G, theta0, order)
    mh = moment_vector(H, theta0, order)
    return float(np.max(np.abs(mg.values - mh.values)))
