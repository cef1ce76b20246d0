import numpy as np
import pytest

from conftest import random_policy, random_view
from netquant.errors import ArgumentError, PositivityError
from netquant.policies import (ClusterPropensityView, PolicySpec,
                               cond_eif_omega, cond_eif_omega_t,
                               cond_eif_omega_t_table, cond_eif_omega_table,
                               policy_mass, policy_mass_table, weight_w,
                               weight_w_table)
from netquant.records import EstimandKind, enumerate_treatment_vectors

STAR, FIX0, FIX1 = EstimandKind.STAR, EstimandKind.FIX0, EstimandKind.FIX1


def uniform_view(m):
    return ClusterPropensityView(np.full(2 ** m, 1.0 / 2 ** m))


class TestPolicySpec:
    def test_parameter_ranges(self):
        with pytest.raises(ArgumentError):
            PolicySpec("dap", 0.5)
        with pytest.raises(ArgumentError):
            PolicySpec("uap", 1.2)
        with pytest.raises(ArgumentError):
            PolicySpec("cps", 0.0)
        with pytest.raises(ArgumentError):
            PolicySpec("ips", -1.0)
        with pytest.raises(ArgumentError):
            PolicySpec("mrt", 0.5)

    def test_parse(self):
        spec = PolicySpec.parse("cps:0.5")
        assert spec.kind == "cps" and spec.parameter == 0.5
        with pytest.raises(ArgumentError):
            PolicySpec.parse("cps")


class TestPolicyMass:
    def test_dap_point_mass(self):
        view = uniform_view(2)
        spec = PolicySpec("dap", 1)
        assert policy_mass(spec, (1, 1), view) == 1.0
        for a in ((0, 0), (0, 1), (1, 0)):
            assert policy_mass(spec, a, view) == 0.0

    def test_uap_half_is_uniform(self):
        view = uniform_view(2)
        table = policy_mass_table(PolicySpec("uap", 0.5), view)
        assert np.allclose(table, 0.25, atol=1e-15)

    def test_cps_delta_one_recovers_factual(self, rng):
        view = random_view(rng, 3)
        table = policy_mass_table(PolicySpec("cps", 1.0), view)
        assert np.abs(table - view.joint).max() < 1e-14

    def test_cps_delta_two_uniform_hand_value(self):
        # delta^s pi / sum: 4 * 0.25 / (0.25 * (1 + 2 + 2 + 4)) = 4/9
        view = uniform_view(2)
        assert abs(policy_mass(PolicySpec("cps", 2.0), (1, 1), view) - 4.0 / 9.0) < 1e-12

    def test_normalization_all_kinds(self, rng):
        for _ in range(80):
            m = int(rng.integers(1, 7))
            view = random_view(rng, m)
            spec = random_policy(rng)
            total = policy_mass_table(spec, view).sum()
            assert abs(total - 1.0) < 1e-10, (spec, m)

    def test_cps_odds_shift(self, rng):
        for _ in range(10):
            m = int(rng.integers(2, 6))
            view = random_view(rng, m)
            delta = float(rng.uniform(0.3, 3.0))
            h = policy_mass_table(PolicySpec("cps", delta), view)
            s = enumerate_treatment_vectors(m).sum(axis=1)
            for i in range(2 ** m):
                for j in range(2 ** m):
                    if s[i] - s[j] == 1:
                        ratio = (h[i] / h[j]) / (view.joint[i] / view.joint[j])
                        assert abs(ratio - delta) < 1e-10

    def test_ips_individual_odds_shift(self, rng):
        from netquant.policies import shifted_marginal
        pi = rng.uniform(0.05, 0.95, size=50)
        for delta in (0.4, 1.0, 2.7):
            pd = shifted_marginal(pi, delta)
            assert np.abs((pd / (1 - pd)) / (pi / (1 - pi)) - delta).max() < 1e-10

    def test_cps_equals_ips_under_product(self, rng):
        for _ in range(20):
            m = int(rng.integers(1, 7))
            marg = rng.uniform(0.05, 0.95, size=m)
            view = ClusterPropensityView.from_product(marg)
            delta = float(rng.uniform(0.3, 3.0))
            h_cps = policy_mass_table(PolicySpec("cps", delta), view)
            h_ips = policy_mass_table(PolicySpec("ips", delta), view)
            assert np.abs(h_cps - h_ips).max() < 1e-10

    def test_ips_positivity_error(self):
        joint = np.array([1.0 - 3e-13, 1e-13, 1e-13, 1e-13])
        view = ClusterPropensityView(joint)
        with pytest.raises(PositivityError):
            policy_mass_table(PolicySpec("ips", 2.0), view)

    def test_wrong_length_vector(self):
        with pytest.raises(ArgumentError):
            policy_mass(PolicySpec("uap", 0.5), (1, 0, 1), uniform_view(2))


class TestWeights:
    def test_star_weight_is_mass(self, rng):
        view = random_view(rng, 3)
        spec = PolicySpec("cps", 1.4)
        h = policy_mass_table(spec, view)
        vecs = enumerate_treatment_vectors(3)
        for j in (1, 2, 3):
            for vi, a in enumerate(vecs):
                assert weight_w(spec, STAR, j, a, view) == pytest.approx(h[vi], abs=1e-14)

    def test_fix1_vanishes_when_own_bit_zero(self, rng):
        view = random_view(rng, 3)
        spec = PolicySpec("uap", 0.3)
        assert weight_w(spec, FIX1, 1, (0, 1, 1), view) == 0.0
        assert weight_w(spec, FIX0, 2, (0, 1, 0), view) == 0.0

    def test_uap_peer_marginal_hand_value(self):
        # alpha=0.5, M=2, j=1, a=(1,0): H((0,0)) + H((1,0)) = 0.25 + 0.25
        view = uniform_view(2)
        w = weight_w(PolicySpec("uap", 0.5), FIX1, 1, (1, 0), view)
        assert abs(w - 0.5) < 1e-14

    def test_weight_sums_to_one(self, rng):
        for _ in range(40):
            m = int(rng.integers(1, 7))
            view = random_view(rng, m)
            spec = random_policy(rng)
            for t in (STAR, FIX0, FIX1):
                table = weight_w_table(spec, t, view)
                sums = table.sum(axis=1)
                assert np.abs(sums - 1.0).max() < 1e-10, (spec, t, m)

    def test_individual_index_bounds(self, rng):
        view = random_view(rng, 2)
        with pytest.raises(ArgumentError):
            weight_w(PolicySpec("uap", 0.5), STAR, 3, (0, 1), view)


class TestOmega:
    def test_zero_for_known_policies(self, rng):
        view = random_view(rng, 3)
        for kind, par in (("dap", 1.0), ("uap", 0.4)):
            table = cond_eif_omega_table(PolicySpec(kind, par), (1, 0, 1), view)
            assert np.all(table == 0.0)

    def test_cps_delta_one_closed_form(self, rng):
        # delta=1: Omega(A; a) = 1{A = a} - pi(a)
        view = random_view(rng, 3)
        spec = PolicySpec("cps", 1.0)
        vecs = enumerate_treatment_vectors(3)
        for oi, a_obs in enumerate(vecs):
            table = cond_eif_omega_table(spec, a_obs, view)
            expected = (np.arange(8) == oi).astype(float) - view.joint
            assert np.abs(table - expected).max() < 1e-12

    def test_conditional_mean_zero_exact_enumeration(self, rng):
        for _ in range(30):
            m = int(rng.integers(1, 7))
            view = random_view(rng, m)
            spec = random_policy(rng)
            vecs = enumerate_treatment_vectors(m)
            total = np.zeros(2 ** m)
            for oi, a_obs in enumerate(vecs):
                total += view.joint[oi] * cond_eif_omega_table(spec, a_obs, view)
            assert np.abs(total).max() < 1e-10, (spec, m)

    def test_omega_t_star_equals_omega(self, rng):
        view = random_view(rng, 3)
        spec = PolicySpec("ips", 1.6)
        a_obs = (1, 1, 0)
        omega = cond_eif_omega_table(spec, a_obs, view)
        table = cond_eif_omega_t_table(spec, STAR, a_obs, view)
        for j in range(3):
            assert np.abs(table[j] - omega).max() < 1e-14

    def test_omega_t_vanishes_on_treated_bit(self, rng):
        view = random_view(rng, 3)
        spec = PolicySpec("cps", 2.0)
        for t in (FIX0, FIX1):
            assert cond_eif_omega_t(spec, t, 1, (1, 0, 1), (1, 0, 1), view) == 0.0

    def test_omega_t_fix_hand_sum(self, rng):
        # t=1, M=2, j=1, a=(0,1), cps delta=1: Omega(A;(0,1)) + Omega(A;(1,1))
        view = random_view(rng, 2)
        spec = PolicySpec("cps", 1.0)
        a_obs = (1, 0)
        expected = (cond_eif_omega(spec, a_obs, (0, 1), view)
                    + cond_eif_omega(spec, a_obs, (1, 1), view))
        got = cond_eif_omega_t(spec, FIX1, 1, a_obs, (0, 1), view)
        assert abs(got - expected) < 1e-14

    def test_omega_t_conditional_mean_zero(self, rng):
        for _ in range(15):
            m = int(rng.integers(1, 6))
            view = random_view(rng, m)
            spec = random_policy(rng)
            vecs = enumerate_treatment_vectors(m)
            for t in (STAR, FIX0, FIX1):
                total = np.zeros((m, 2 ** m))
                for oi, a_obs in enumerate(vecs):
                    total += view.joint[oi] * cond_eif_omega_t_table(spec, t, a_obs, view)
                assert np.abs(total).max() < 1e-10, (spec, t, m)

    def test_cps_positivity_error_on_zero_observed(self):
        view = ClusterPropensityView(np.array([0.5, 0.5 - 2e-13, 1e-13, 1e-13]))
        with pytest.raises(PositivityError):
            cond_eif_omega_table(PolicySpec("cps", 2.0), (1, 1), view)


class TestViewInvariants:
    def test_marginals_consistent_with_joint(self, rng):
        view = random_view(rng, 4)
        vecs = enumerate_treatment_vectors(4).astype(float)
        implied = vecs.T @ view.joint
        assert np.abs(view.marginals - implied).max() < 1e-14

    def test_validate_rejects_bad_sum(self):
        with pytest.raises(ArgumentError):
            ClusterPropensityView(np.array([0.5, 0.2, 0.1, 0.1])).validate()

    def test_from_product_matches_mass(self, rng):
        marg = np.array([0.2, 0.7])
        view = ClusterPropensityView.from_product(marg)
        assert view.mass((1, 0)) == pytest.approx(0.2 * 0.3, abs=1e-15)
        assert np.abs(view.marginals - marg).max() < 1e-12
