import numpy as np
import pytest

from mixot.errors import ConfigError, UnsupportedError
from mixot.estimators import PhiClass
from mixot.identifiability import (
    ProbeReport,
    SingularitySystem,
    default_radius,
    escape_probe,
    gamma_pathological_path,
    inverse_bound_probe,
    n1_probe,
    pde_residual,
    product_identifiability_probe,
    singularity_system_probe,
    strong_identifiability_gram,
    trajectory_verdict,
)
from mixot.kernels import Gamma, GaussianLocation
from mixot.measures import MixingMeasure

G1 = GaussianLocation(1.0)
TWO = MixingMeasure([[-1.0], [1.0]], [0.5, 0.5])
GAMMA_PATH = MixingMeasure([[2.0, 1.5], [3.0, 1.5]], [0.5, 0.5])
GAMMA_CONTROL = MixingMeasure([[2.0, 1.5], [3.0, 1.8]], [0.5, 0.5])


class TestVerdicts:
    def test_proportional_decay(self):
        assert trajectory_verdict([1, 0.1, 0.01], [1, 0.1, 0.01])[0] == "degenerate"

    def test_flat(self):
        assert trajectory_verdict([1, 0.5, 0.25], [2.0, 1.9, 2.1])[0] == "bounded-away"

    def test_in_between(self):
        assert trajectory_verdict([1, 0.1, 0.01], [1.0, 0.5, 0.2])[0] == "inconclusive"

    def test_report_rejects_negative(self):
        with pytest.raises(ValueError):
            ProbeReport("x", 1, -0.1)


class TestGram:
    def test_gaussian_location_independent(self):
        lam, verdict = strong_identifiability_gram(G1, 2, [[-1.0], [1.0]])
        assert verdict == "independent" and lam > 1e-8

    def test_location_scale_dependent(self):
        lam, verdict = strong_identifiability_gram("gaussian-location-scale", 2, [[0.0, 1.0], [1.5, 2.0]])
        assert verdict == "dependent" and lam < 1e-10

    def test_gamma_shift_dependent(self):
        lam, verdict = strong_identifiability_gram(Gamma(), 1, [[2.0, 1.5], [3.0, 1.5]])
        assert verdict == "dependent"

    def test_gamma_generic_independent(self):
        assert strong_identifiability_gram(Gamma(), 1, [[2.0, 1.5], [3.0, 1.8]])[1] == "independent"

    def test_verdict_stable_under_rescaling(self):
        # a wider kernel rescales every derivative differently; the normalised Gram does not care
        for cov in (0.25, 1.0, 4.0):
            k = GaussianLocation(cov)
            assert strong_identifiability_gram(k, 2, [[-1.0], [1.0]])[1] == "independent"
        for n in (1024, 4096):
            assert strong_identifiability_gram(G1, 2, [[-1.0], [1.0]], n_points=n)[1] == "independent"

    def test_rejects_coincident_atoms(self):
        with pytest.raises(ValueError):
            strong_identifiability_gram(G1, 1, [[0.0], [0.0]])

    def test_rejects_bad_order(self):
        with pytest.raises(ConfigError):
            strong_identifiability_gram(G1, 3, [[0.0]])


class TestPDE:
    def test_heat_random_points(self, rng):
        for _ in range(50):
            theta = [rng.uniform(-3, 3), rng.uniform(0.2, 5)]
            assert pde_residual("gaussian-location-scale", "heat", theta) < 1e-8

    def test_gamma_shift(self):
        assert pde_residual("gamma", "gamma-shift", [2.0, 1.5]) < 1e-5

    def test_skew_normal(self):
        assert pde_residual("skew-normal", "skew-normal-1", [0.0, 1.0, 1.0]) < 1e-4
        assert pde_residual("skew-normal", "skew-normal-2", [0.0, 1.0, 1.0]) < 1e-4

    def test_wrong_identity_is_not_zero(self):
        # sanity: a generic derivative combination does not vanish
        x = np.linspace(-3, 3, 7)
        k = GaussianLocation(1.0)
        assert np.max(np.abs(k.param_derivative(x, [0.0], (2,)))) > 0.1

    def test_unsupported_combination(self):
        with pytest.raises(UnsupportedError):
            pde_residual("gamma", "heat", [2.0, 1.5])


class TestInverseBound:
    def test_exact_fitted_ks_bounded(self):
        rep = inverse_bound_probe(G1, PhiClass("ks-cdf"), TWO, 2, pair_budget=30, exponent=1)
        assert rep.verdict == "bounded-away"
        mins = [r for _, r in rep.trajectory]
        assert max(mins) / min(mins) < 3

    def test_monomial_bounded(self):
        rep = inverse_bound_probe(G1, PhiClass("monomial", k=2), TWO, 2, pair_budget=30, exponent=3)
        assert rep.verdict == "bounded-away"
        assert rep.thresholds["exponent"] == 3

    def test_default_exponent_tracks_overfit_index(self):
        rep = inverse_bound_probe(G1, PhiClass("monomial", k=2), MixingMeasure.dirac([0.0]), 2,
                                  pair_budget=6)
        assert rep.thresholds["exponent"] == 3

    def test_overfitted_with_exponent_one_degenerates(self):
        rep = inverse_bound_probe(G1, PhiClass("ks-cdf"), MixingMeasure.dirac([0.0]), 2,
                                  pair_budget=30, exponent=1)
        assert rep.verdict == "degenerate"

    def test_monotone_in_budget(self):
        small = inverse_bound_probe(G1, PhiClass("ks-cdf"), TWO, 2, pair_budget=10, exponent=1)
        big = inverse_bound_probe(G1, PhiClass("ks-cdf"), TWO, 2, pair_budget=25, exponent=1)
        assert big.min_ratio <= small.min_ratio

    def test_default_radius(self):
        assert default_radius(TWO) == pytest.approx(0.4)
        assert default_radius(MixingMeasure.dirac([0.0])) == pytest.approx(0.2)

    def test_needs_enough_atoms(self):
        with pytest.raises(ConfigError):
            inverse_bound_probe(G1, PhiClass("ks-cdf"), TWO, 1)

    def test_escape(self):
        rep = escape_probe(PhiClass("ks-cdf"), TWO)
        assert rep.verdict == "degenerate"
        assert rep.trajectory[-1][1] < rep.trajectory[0][1] / 50


class TestGammaPath:
    def test_pathological_decay(self):
        rep = gamma_pathological_path(GAMMA_PATH)
        traj = dict(rep.trajectory)
        assert traj[1e-3] < 0.2 * traj[1e-1]
        assert rep.verdict == "degenerate"

    def test_control_stable(self):
        control = MixingMeasure([[2.0, 1.5], [3.0, 1.8]], [0.5, 0.5])
        rep = gamma_pathological_path(control, strict=False)
        ratios = [r for _, r in rep.trajectory]
        assert max(ratios) / min(ratios) < 2

    def test_strict_requires_pathological_pair(self):
        with pytest.raises(ValueError):
            gamma_pathological_path(GAMMA_CONTROL)

    def test_zero_t_excluded(self):
        rep = gamma_pathological_path(GAMMA_PATH, t_grid=(0.0, 1e-2, 1e-3))
        assert [t for t, _ in rep.trajectory] == [1e-2, 1e-3]


class TestSingularity:
    def test_known_solution(self):
        system = SingularitySystem(1, 3)
        a, b, c = np.array([1.0, -1.0]), np.array([-0.5, -0.5]), np.array([1.0, 1.0])
        assert np.allclose(system.residuals(a, b, c), 0.0, atol=1e-15)
        assert SingularitySystem.nontrivial(a, b, c)
        assert not SingularitySystem.nontrivial(np.zeros(2), b, c)

    def test_bad_arguments(self):
        with pytest.raises(ConfigError):
            SingularitySystem(3, 4)
        with pytest.raises(ConfigError):
            SingularitySystem(1, 9)

    def test_found_below_threshold(self):
        found, witness, rep = singularity_system_probe(1, 3, budget=500)
        assert found and rep.verdict == "solution-found" and not rep.heuristic
        system = SingularitySystem(1, 3)
        assert np.sum(system.relative_residuals(*(np.array(witness[key]) for key in "abc")) ** 2) < 1e-10

    def test_not_found_at_threshold_is_heuristic(self):
        found, witness, rep = singularity_system_probe(1, 4, budget=1000)
        assert not found and witness is None and rep.heuristic


class TestProduct:
    def test_thresholds(self):
        G0 = MixingMeasure([[0.2], [0.7]], [0.4, 0.6])
        found2, w2, _ = product_identifiability_probe(G0, 2, budget=50)
        assert found2
        found3, _, rep3 = product_identifiability_probe(G0, 3, budget=50)
        assert not found3 and rep3.heuristic

    def test_single_bernoulli(self):
        found, _, _ = product_identifiability_probe(MixingMeasure.dirac([0.3]), 1, budget=20)
        assert not found

    def test_rejects_non_bernoulli(self):
        with pytest.raises(ConfigError):
            product_identifiability_probe(MixingMeasure.dirac([1.5]), 2)


class TestN1:
    def test_gamma_pathological_needs_two(self):
        n1, reports = n1_probe(Gamma(lo=(0.2, 0.05), hi=(30, 30)), GAMMA_PATH, N_range=(1, 2))
        assert n1 == 2
        assert reports[0].verdict == "degenerate"

    def test_gamma_generic(self):
        assert n1_probe(Gamma(lo=(0.2, 0.05), hi=(30, 30)), GAMMA_CONTROL, N_range=(1, 2))[0] == 1

    def test_gaussian(self):
        assert n1_probe(G1, TWO, N_range=(1, 2))[0] == 1
