import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial.hermite_e import hermegauss
from scipy import optimize, stats

from mixot.errors import ConfigError, EstimationError, UnsupportedError
from mixot.estimators import (
    EstimatorConfig,
    KSObjective,
    MMDObjective,
    OptimizerSettings,
    PhiClass,
    em_estimate,
    estimate,
    gmm_estimate,
    gmm_estimate_from_moments,
    ks_distance,
    median_heuristic_gamma,
    min_ks_estimate,
    min_mmd_estimate,
    mmd_squared,
    moment_statistics,
    optimize_over_gk,
    phi_distance,
    rbf_j_vector,
    rbf_k_matrix,
    unbiased_moment_coefficients,
)
from mixot.estimators.optimize import GkParametrization
from mixot.kernels import Bernoulli, Gamma, GaussianLocation
from mixot.measures import MixingMeasure, moment_vector, wasserstein
from mixot.mixtures import MixtureModel, ProductMixtureModel

G1 = GaussianLocation(1.0)
TWO = MixingMeasure([[-1.0], [1.0]], [0.5, 0.5])

# probabilists' Gauss-Hermite: int f(z) phi(z) dz ~ sum w f(z) / sqrt(2 pi)
GH_Z, GH_W = hermegauss(150)
GH_W = GH_W / math.sqrt(2 * math.pi)


def sample(G, n, seed, kernel=G1):
    return MixtureModel(kernel, G).sample(np.random.default_rng(seed), n)


class TestOptimizer:
    def test_quadratic(self):
        target_a = np.array([[-0.7], [1.9]])
        target_w = np.array([0.3, 0.7])

        def obj(atoms, w):
            return float(np.sum((atoms - target_a) ** 2) + np.sum((w - target_w) ** 2))

        (atoms, w), val, diag = optimize_over_gk(
            obj, 2, [-5.0], [5.0], OptimizerSettings(n_starts=4, xatol=1e-9, fatol=1e-14))
        order = np.argsort(atoms[:, 0])
        assert np.allclose(atoms[order], target_a, atol=1e-6)
        assert np.allclose(w[order], target_w, atol=1e-6)
        assert val < 1e-10
        assert diag.starts == 4

    def test_deterministic(self):
        x = sample(TWO, 300, 1)
        obj = KSObjective(x, G1)
        runs = [optimize_over_gk(obj, 2, [-5.0], [5.0], OptimizerSettings(n_starts=3, seed=11))
                for _ in range(2)]
        assert np.array_equal(runs[0][0][0], runs[1][0][0])
        assert runs[0][1] == runs[1][1]

    def test_all_nonfinite_raises(self):
        with pytest.raises(EstimationError):
            optimize_over_gk(lambda a, w: float("nan"), 1, [0.0], [1.0],
                             OptimizerSettings(n_starts=2))

    def test_parametrization_round_trip(self):
        par = GkParametrization(3, np.array([-2.0]), np.array([2.0]))
        atoms = np.array([[-1.0], [0.5], [1.5]])
        w = np.array([0.2, 0.5, 0.3])
        a2, w2, excess = par.decode(par.encode(atoms, w))
        assert np.allclose(a2, atoms) and np.allclose(w2, w) and excess == 0

    def test_ks_multistart_concordance(self):
        # two independent 32-start runs land on the same optimum
        agree = 0
        reps = 20
        for rep in range(reps):
            x = sample(TWO, 400, 100 + rep)
            obj = KSObjective(x, G1)
            vals = [optimize_over_gk(obj, 2, [-10.0], [10.0],
                                     OptimizerSettings(n_starts=32, seed=seed))[1]
                    for seed in (rep, 10_000 + rep)]
            agree += abs(vals[0] - vals[1]) <= 1e-4
        assert agree >= 0.9 * reps


class TestConfig:
    def test_validation(self):
        with pytest.raises(ConfigError):
            EstimatorConfig(k=0)
        with pytest.raises(ConfigError):
            EstimatorConfig(n_starts=0)
        with pytest.raises(ConfigError):
            EstimatorConfig.from_dict({"k": 2, "typo": 1})

    def test_dispatch(self):
        x = sample(TWO, 200, 3)
        with pytest.raises(ConfigError):
            estimate(x, G1, EstimatorConfig(estimator="nope"))
        with pytest.raises(ConfigError):
            estimate(x[:, None], G1, EstimatorConfig(estimator="gmm"), kind="product")


class TestMMD:
    def test_k_matches_gauss_hermite(self, rng):
        for _ in range(100):
            a, b = rng.uniform(-3, 3, 2)
            # keeps gamma * sd^2 moderate so the tensor rule resolves the RBF peak
            gamma = rng.uniform(0.05, 1.5)
            sd = rng.uniform(0.5, 1.5)
            z1, z2 = np.meshgrid(a + sd * GH_Z, b + sd * GH_Z, indexing="ij")
            quad = np.einsum("i,j,ij->", GH_W, GH_W, np.exp(-gamma * (z1 - z2) ** 2))
            closed = rbf_k_matrix([[a]], [[b]], [[sd * sd]], gamma)[0, 0]
            assert closed == pytest.approx(quad, abs=1e-8)

    def test_j_matches_gauss_hermite(self, rng):
        for _ in range(100):
            a = rng.uniform(-3, 3)
            X = rng.uniform(-4, 4, 5)
            gamma = rng.uniform(0.05, 1.5)
            z = a + GH_Z
            quad = np.mean([GH_W @ np.exp(-gamma * (z - xi) ** 2) for xi in X])
            assert rbf_j_vector([[a]], X, [[1.0]], gamma)[0] == pytest.approx(quad, abs=1e-8)

    def test_self_distance_zero(self, rng):
        for _ in range(20):
            k = int(rng.integers(1, 5))
            G = MixingMeasure(rng.uniform(-3, 3, (k, 1)), rng.dirichlet(np.ones(k)))
            assert abs(mmd_squared(G, G, [[1.0]], rng.uniform(0.1, 2))) <= 1e-12

    def test_k_max_on_diagonal(self):
        grid = np.linspace(-5, 5, 201)[:, None]
        K = rbf_k_matrix(grid, grid, [[1.0]], 0.7)
        assert np.all(np.diag(K)[:, None] >= K - 1e-15)

    def test_monte_carlo_oracle(self):
        G = MixingMeasure([[-1.0], [0.5]], [0.4, 0.6])
        H = MixingMeasure([[0.0], [1.5]], [0.7, 0.3])
        gamma = 0.5
        rng = np.random.default_rng(0)
        n = 10**6
        z1, z2 = sample(G, n, 1), sample(G, n, 2)
        y1, y2 = sample(H, n, 3), sample(H, n, 4)

        def ker(a, b):
            return np.exp(-gamma * (a - b) ** 2)

        s = ker(z1, z2) - ker(z1, y1) - ker(z2, y2) + ker(y1, y2)
        se = s.std() / math.sqrt(n)
        assert abs(s.mean() - mmd_squared(G, H, [[1.0]], gamma)) <= 3 * se

    def test_phi_distance_matches(self):
        G, H = TWO, MixingMeasure.dirac([0.0])
        d = phi_distance(PhiClass("mmd-rkhs", gamma=0.3), G, H, G1)
        assert d == pytest.approx(math.sqrt(mmd_squared(G, H, [[1.0]], 0.3)))
        assert d >= -1e-12

    def test_bad_gamma(self):
        with pytest.raises(ConfigError):
            rbf_k_matrix([[0.0]], [[0.0]], [[1.0]], 0.0)
        with pytest.raises(ConfigError):
            PhiClass("mmd-rkhs", gamma=-1)

    def test_gradient(self, rng):
        x = sample(TWO, 200, 5)
        obj = MMDObjective(x, G1, 0.4)
        atoms = np.array([[-0.5], [0.8]])
        p = np.array([0.3, 0.7])
        _, ga, gp = obj.value_and_grad(atoms, p)
        h = 1e-6
        for i in range(2):
            e = np.zeros_like(atoms)
            e[i, 0] = h
            fd = (obj(atoms + e, p) - obj(atoms - e, p)) / (2 * h)
            assert ga[i, 0] == pytest.approx(fd, abs=1e-7)

    def test_median_heuristic(self):
        x = np.array([0.0, 1.0, 2.0])
        # pairwise distances 1, 2, 1: median 1
        assert median_heuristic_gamma(x) == pytest.approx(0.5)

    def test_single_component_recovery(self):
        x = sample(MixingMeasure.dirac([0.7]), 4000, 9)
        res = min_mmd_estimate(x, G1, gamma=1.0, cfg=EstimatorConfig(k=1, estimator="min-mmd"))
        assert abs(res.estimate.atoms[0, 0] - 0.7) < 5 / math.sqrt(4000)

    def test_needs_gaussian_location(self):
        with pytest.raises(UnsupportedError):
            min_mmd_estimate(np.ones(5), Gamma(), gamma=1.0)


class TestKS:
    def test_ks_distance_closed_form(self):
        d = ks_distance(MixingMeasure.dirac([0.0]), MixingMeasure.dirac([1.0]), G1)
        assert d == pytest.approx(2 * stats.norm.cdf(0.5) - 1, abs=1e-9)
        assert ks_distance(TWO, TWO, G1) == 0.0

    def test_objective_matches_scipy_statistic(self, rng):
        x = rng.standard_normal(300)
        obj = KSObjective(x, G1)
        ref = stats.kstest(x - 0.2, "norm").statistic
        assert obj(np.array([[0.2]]), np.array([1.0])) == pytest.approx(ref, abs=1e-12)

    def test_objective_with_ties(self):
        x = np.array([0.0, 0.0, 1.0, 1.0, 1.0, 2.0])
        obj = KSObjective(x, G1)
        ref = stats.kstest(x, "norm").statistic
        assert obj(np.array([[0.0]]), np.array([1.0])) == pytest.approx(ref, abs=1e-12)

    def test_k1_matches_golden_section(self):
        x = sample(MixingMeasure.dirac([0.3]), 500, 21)
        obj = KSObjective(x, G1)
        ref = optimize.minimize_scalar(lambda t: obj(np.array([[t]]), np.array([1.0])),
                                       bounds=(-2, 2), method="bounded",
                                       options={"xatol": 1e-10})
        res = min_ks_estimate(x, G1, EstimatorConfig(k=1, xatol=1e-9, fatol=1e-13))
        assert res.objective <= ref.fun + 1e-12
        assert res.estimate.atoms[0, 0] == pytest.approx(ref.x, abs=1e-6)

    def test_empty_data(self):
        with pytest.raises(ValueError):
            min_ks_estimate(np.array([]), G1)

    def test_single_component_recovery(self):
        x = sample(MixingMeasure.dirac([-0.4]), 8000, 4)
        res = min_ks_estimate(x, G1, EstimatorConfig(k=1))
        assert abs(res.estimate.atoms[0, 0] + 0.4) < 5 / math.sqrt(8000)

    def test_bernoulli(self):
        x = MixtureModel(Bernoulli(), MixingMeasure.dirac([0.3])).sample(np.random.default_rng(1), 5000)
        res = min_ks_estimate(x, Bernoulli(), EstimatorConfig(k=1))
        assert abs(res.estimate.atoms[0, 0] - x.mean()) < 1e-4

    def test_multivariate_diagonal(self):
        k = GaussianLocation([1.0, 1.0])
        x = MixtureModel(k, MixingMeasure.dirac([0.5, -0.5])).sample(np.random.default_rng(2), 2000)
        res = min_ks_estimate(x, k, EstimatorConfig(k=1))
        assert np.allclose(res.estimate.atoms[0], [0.5, -0.5], atol=0.15)


class TestGMM:
    def test_coefficients(self):
        A = unbiased_moment_coefficients(3, 1.0)
        assert np.allclose(A[1], [0, 1, 0, 0])
        assert np.allclose(A[2], [-1, 0, 1, 0])
        assert np.allclose(A[3], [0, -3, 0, 1])

    @pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
    def test_unbiased_by_quadrature(self, sigma, rng):
        for _ in range(5):
            theta, c = rng.uniform(-2, 2, 2)
            x = theta + sigma * GH_Z
            T = moment_statistics(x, 5, sigma, c)
            for j in range(1, 6):
                assert GH_W @ T[:, j - 1] == pytest.approx((theta - c) ** j, abs=1e-9)

    def test_dirac_zero_data(self):
        x = sample(MixingMeasure.dirac([0.0]), 20000, 8)
        T = moment_statistics(x, 3, 1.0)
        se = T.std(axis=0, ddof=1) / math.sqrt(len(x))
        assert np.all(np.abs(T.mean(axis=0)) <= 3 * se)

    def test_estimatable_over_replicates(self):
        phi = PhiClass("monomial", k=2, center=0.3)
        G = MixingMeasure([[-1.0], [0.5], [1.2]], [0.3, 0.3, 0.4])
        target = phi.evaluate(G, G1)
        for rep in range(100):
            T = phi.statistic(sample(G, 2000, 1000 + rep), G1)
            se = T.std(axis=0, ddof=1) / math.sqrt(T.shape[0])
            assert np.all(np.abs(T.mean(axis=0) - target) <= 4 * se)

    def test_noiseless_recovery(self):
        G = MixingMeasure([[-0.8], [1.1]], [0.35, 0.65])
        m = moment_vector(G, [0.0], 3).values[1:]
        res = gmm_estimate_from_moments(m, G1, EstimatorConfig(k=2, estimator="gmm"))
        assert wasserstein(res.estimate, G)[0] < 1e-6

    def test_unsupported_kernel(self):
        with pytest.raises(UnsupportedError):
            gmm_estimate(np.ones(10), Gamma())
        with pytest.raises(UnsupportedError):
            PhiClass("monomial").statistic(np.ones(3), Gamma())


class TestEM:
    def test_k1_is_sample_mean(self):
        x = sample(MixingMeasure.dirac([0.4]), 1000, 1)
        res = em_estimate(x, G1, EstimatorConfig(k=1, estimator="em", em_restarts=2))
        assert res.estimate.atoms[0, 0] == pytest.approx(x.mean(), abs=1e-12)

    def test_loglik_monotone(self):
        x = sample(TWO, 800, 2)
        res = em_estimate(x, G1, EstimatorConfig(k=3, estimator="em", em_restarts=3))
        trace = np.array(res.diagnostics["loglik_trace"])
        assert np.all(np.diff(trace) >= -1e-9 * np.abs(trace[1:]))
        assert "loglik_trace" not in res.to_dict()["diagnostics"]

    def test_product_bernoulli_recovery(self):
        truth = MixingMeasure([[0.2], [0.7]], [0.4, 0.6])
        x = ProductMixtureModel(Bernoulli(), truth, 20).sample_sequences(2000, np.random.default_rng(3))
        res = em_estimate(x, Bernoulli(), EstimatorConfig(k=2, estimator="em", em_restarts=4),
                          kind="product")
        est = res.estimate.sorted()
        assert np.allclose(est.atoms[:, 0], [0.2, 0.7], atol=0.05)
        assert np.allclose(est.weights, [0.4, 0.6], atol=0.05)

    def test_gamma_plain(self):
        truth = MixingMeasure([[2.0, 1.0], [8.0, 1.0]], [0.5, 0.5])
        x = sample(truth, 4000, 5, kernel=Gamma())
        res = em_estimate(x, Gamma(), EstimatorConfig(k=2, estimator="em", em_restarts=4))
        assert wasserstein(res.estimate, truth)[0] < 0.8


class TestContracts:
    """Estimators never do worse than the truth on their own objective."""

    def _cfg(self, name, **kw):
        return EstimatorConfig(k=2, estimator=name, **kw)

    @pytest.mark.parametrize("rep", range(5))
    def test_argmin_contract(self, rep):
        x = sample(TWO, 600, 300 + rep)
        truth_a, truth_w = TWO.atoms, TWO.weights

        ks = min_ks_estimate(x, G1, self._cfg("min-ks"))
        assert ks.objective <= KSObjective(x, G1)(truth_a, truth_w) + 1e-8

        gamma = median_heuristic_gamma(x)
        mmd = min_mmd_estimate(x, G1, gamma, self._cfg("min-mmd"))
        assert mmd.objective <= MMDObjective(x, G1, gamma)(truth_a, truth_w) + 1e-10

        gm = gmm_estimate(x, G1, self._cfg("gmm"))
        T = moment_statistics(x, 3, 1.0).mean(axis=0)
        at_truth = np.max(np.abs(moment_vector(TWO, [0.0], 3).values[1:] - T))
        assert gm.objective <= at_truth + 1e-8

        em = em_estimate(x, G1, self._cfg("em", em_restarts=4))
        nll_truth = -MixtureModel(G1, TWO).logpdf(x).mean()
        assert em.objective <= nll_truth + 1e-9

    @pytest.mark.parametrize("name", ["min-ks", "min-mmd", "gmm", "em"])
    def test_permutation_invariance(self, name):
        G = MixingMeasure([[-2.0], [2.0]], [0.5, 0.5])
        x = sample(G, 1000, 77)
        perm = np.random.default_rng(1).permutation(x.size)
        cfg = EstimatorConfig(k=2, estimator=name, em_restarts=4)
        a = estimate(x, G1, cfg).estimate
        b = estimate(x[perm], G1, cfg).estimate
        assert wasserstein(a, b)[0] < 1e-3

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_estimate_inside_box(self, seed):
        x = sample(TWO, 200, seed)
        cfg = EstimatorConfig(k=3, lo=[-1.5], hi=[1.5], n_starts=2)
        res = min_ks_estimate(x, G1, cfg)
        assert res.estimate.k <= 3
        assert np.all(res.estimate.atoms >= -1.5) and np.all(res.estimate.atoms <= 1.5)
