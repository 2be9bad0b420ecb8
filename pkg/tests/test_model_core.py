"""Probability algebra and objective checks.

Every frozen constant here is first recomputed by an independent route
(four-outcome enumeration, closed-form products, direct sigmoid arithmetic)
inside the test that asserts it.
"""

import itertools

import numpy as np
import pytest

from groupnet.datatypes import Dataset
from groupnet.model import (expected_edge_prob, feature_prob, feature_probs,
                            feature_term, group_pair_tables, network_term,
                            objective, pair_expectation, permute_groups,
                            prior_term)

from conftest import make_state, random_instance


def enum_pair_expectation(phi_i, phi_j, f):
    """Oracle: enumerate the four indicator outcomes explicitly."""
    total = 0.0
    for zi in (0, 1):
        for zj in (0, 1):
            w = (phi_i if zi else 1.0 - phi_i) * (phi_j if zj else 1.0 - phi_j)
            total += w * f[zi][zj]
    return total


class TestPairExpectation:
    def test_degenerate_memberships_pick_one_entry(self, theta_table):
        assert pair_expectation(1.0, 1.0, theta_table) == theta_table[1, 1]
        assert pair_expectation(0.0, 0.0, theta_table) == theta_table[0, 0]

    def test_constant_table_returns_the_constant(self):
        f = np.full((2, 2), 0.37)
        assert pair_expectation(0.5, 0.5, f) == pytest.approx(0.37, abs=1e-15)
        assert pair_expectation(0.21, 0.88, f) == pytest.approx(0.37, abs=1e-15)

    def test_worked_value_against_enumeration(self, theta_table):
        oracle = enum_pair_expectation(0.3, 0.6, theta_table)
        assert oracle == pytest.approx(0.334, abs=1e-12)
        got = pair_expectation(0.3, 0.6, theta_table)
        assert got == pytest.approx(oracle, abs=1e-14)

    def test_weights_are_a_distribution(self):
        # result must be a convex combination of the table entries
        rng = np.random.default_rng(7)
        for _ in range(50):
            pi, pj = rng.random(2)
            f = rng.random((2, 2))
            got = pair_expectation(pi, pj, f)
            assert f.min() - 1e-12 <= got <= f.max() + 1e-12
            oracle = enum_pair_expectation(pi, pj, f)
            assert got == pytest.approx(oracle, abs=1e-12)


class TestExpectedEdgeProb:
    def test_single_group_first_and_second_moment(self, theta_table):
        state = make_state([[0.3], [0.6]], theta_table)
        m1 = enum_pair_expectation(0.3, 0.6, theta_table)
        m2 = enum_pair_expectation(0.3, 0.6, theta_table ** 2)
        assert m1 == pytest.approx(0.334, abs=1e-12)
        assert m2 == pytest.approx(0.1666, abs=1e-12)
        assert expected_edge_prob(state, 0, 1, power=1) == pytest.approx(m1, abs=1e-14)
        assert expected_edge_prob(state, 0, 1, power=2) == pytest.approx(m2, abs=1e-14)

    def test_constant_tables_give_power_of_constant(self):
        c, k = 0.35, 3
        state = make_state(np.random.default_rng(0).random((4, k)),
                           np.full((k, 2, 2), c))
        for i, j in [(0, 1), (2, 3), (3, 0)]:
            assert expected_edge_prob(state, i, j) == pytest.approx(c ** k, abs=1e-12)

    def test_groups_multiply(self, theta_table):
        # pair one group at expectation 0.334 with a constant-0.5 group
        theta = np.stack([theta_table, np.full((2, 2), 0.5)])
        state = make_state([[0.3, 0.2], [0.6, 0.9]], theta)
        assert expected_edge_prob(state, 0, 1) == pytest.approx(0.167, abs=1e-12)

    def test_self_pair_rejected(self, theta_table):
        state = make_state([[0.3], [0.6]], theta_table)
        with pytest.raises(ValueError):
            expected_edge_prob(state, 1, 1)

    def test_monotone_in_every_affinity_entry(self):
        rng = np.random.default_rng(3)
        state, _ = random_instance(3, n=3, k=2, l=0)
        base = expected_edge_prob(state, 0, 1)
        assert 0.0 < base < 1.0
        for k in range(2):
            for x1 in (0, 1):
                for x2 in (0, 1):
                    bumped = state.copy()
                    bumped.affinities.theta[k, x1, x2] += 0.01
                    assert expected_edge_prob(bumped, 0, 1) >= base - 1e-15


class TestFeatureProb:
    def test_zero_weights_are_uninformative(self):
        state = make_state([[0.4, 0.7]], np.ones((2, 2, 2)) * 0.5,
                           w=np.zeros((3, 3)))
        for l in range(3):
            assert feature_prob(state, 0, l) == pytest.approx(0.5, abs=1e-15)

    def test_worked_sigmoid_value(self):
        # logit = 2*0.5 - 1*0.5 + 0.5 = 1.0
        state = make_state([[0.5, 0.5]], np.ones((2, 2, 2)) * 0.5,
                           w=[[2.0, -1.0, 0.5]])
        oracle = 1.0 / (1.0 + np.exp(-1.0))
        assert oracle == pytest.approx(0.73106, abs=5e-6)
        assert feature_prob(state, 0, 0) == pytest.approx(oracle, abs=1e-14)

    def test_huge_intercept_saturates_to_one(self):
        state = make_state([[0.5]], np.ones((1, 2, 2)) * 0.5,
                           w=[[0.0, 500.0]])
        p = feature_prob(state, 0, 0)
        assert p > 1.0 - 1e-12 and p < 1.0

    def test_matrix_matches_scalar_path(self):
        state, data = random_instance(11, n=5, k=2, l=4)
        mat = feature_probs(state)
        for i in range(5):
            for l in range(4):
                assert mat[i, l] == pytest.approx(feature_prob(state, i, l),
                                                  abs=1e-15)


class TestObjective:
    def test_flat_prior_kills_membership_term(self):
        state, data = random_instance(5, n=4, k=2, l=3)
        assert prior_term(state) == 0.0
        assert objective(state, data).l_phi == 0.0

    def test_nonflat_prior_matches_direct_sum(self):
        alpha = np.array([[2.0, 3.0], [0.5, 1.5]])
        state, data = random_instance(6, n=4, k=2, l=0, alpha=alpha)
        phi = state.memberships.phi
        oracle = sum((alpha[k, 0] - 1) * np.log(phi[i, k])
                     + (alpha[k, 1] - 1) * np.log(1 - phi[i, k])
                     for i in range(4) for k in range(2))
        assert prior_term(state) == pytest.approx(oracle, rel=1e-12)

    def test_single_nonedge_contribution(self, theta_table):
        # surrogate for one ordered pair: -E[p] - E[p^2]/2
        state = make_state([[0.3], [0.6]], theta_table)
        m1 = enum_pair_expectation(0.3, 0.6, theta_table)
        m2 = enum_pair_expectation(0.3, 0.6, theta_table ** 2)
        oracle = -m1 - 0.5 * m2
        assert oracle == pytest.approx(-0.4173, abs=1e-12)
        # the reverse pair contributes the same here (symmetric table)
        data = Dataset(np.zeros((2, 2), dtype=np.uint8),
                       np.zeros((2, 0)), ["x", "y"])
        assert network_term(state, data) == pytest.approx(2 * oracle, abs=1e-12)

    def test_all_features_missing_empties_the_feature_term(self):
        state, data = random_instance(8, n=3, k=1, l=4)
        data.features[:] = np.nan
        assert feature_term(state, data) == 0.0

    def test_feature_term_sums_observed_cells_only(self):
        state, data = random_instance(9, n=5, k=2, l=4, missing=0.4)
        probs = feature_probs(state)
        oracle = 0.0
        for i in range(5):
            for l in range(4):
                f = data.features[i, l]
                if np.isnan(f):
                    continue
                oracle += f * np.log(probs[i, l]) + (1 - f) * np.log(1 - probs[i, l])
        assert feature_term(state, data) == pytest.approx(oracle, rel=1e-12)

    def test_edge_terms_use_exact_expected_log(self):
        state, data = random_instance(10, n=4, k=2, l=0, edge_p=0.5)
        _, _, el = group_pair_tables(state.memberships.phi,
                                     state.affinities.theta)
        oracle = 0.0
        for i in range(4):
            for j in range(4):
                if i == j:
                    continue
                if data.adjacency[i, j]:
                    oracle += el[i, j]
                else:
                    oracle -= (expected_edge_prob(state, i, j)
                               + 0.5 * expected_edge_prob(state, i, j, power=2))
        assert network_term(state, data) == pytest.approx(oracle, rel=1e-12)

    def test_total_combines_components_with_penalty_subtracted(self):
        state, data = random_instance(12, n=4, k=2, l=3)
        br = objective(state, data)
        assert br.total == pytest.approx(
            br.l_phi + br.l_f + br.l_a_surrogate - br.l1_penalty, abs=1e-15)
        assert br.l1_penalty == pytest.approx(
            state.hyper.lam * np.abs(state.weights.w[:, :-1]).sum(), rel=1e-12)


class TestInvariants:
    def test_group_permutation_leaves_objective_alone(self):
        state, data = random_instance(21, n=6, k=3, l=5, missing=0.2,
                                      alpha=np.array([[1.5, 2.0]] * 3))
        base = objective(state, data)
        for perm in itertools.permutations(range(3)):
            br = objective(permute_groups(state, perm), data)
            for field in ("l_phi", "l_f", "l_a_surrogate", "l1_penalty"):
                a, b = getattr(base, field), getattr(br, field)
                assert abs(a - b) <= 1e-10 * max(abs(a), 1.0)

    def test_expected_log_below_log_of_expectation(self):
        # concavity of log, checked per pair on random instances
        rng = np.random.default_rng(31)
        for trial in range(25):
            state, _ = random_instance(100 + trial, n=3, k=2, l=0)
            phi = state.memberships.phi
            theta = state.affinities.theta
            _, _, el = group_pair_tables(phi, theta)
            for i in range(3):
                for j in range(3):
                    if i != j:
                        ep = expected_edge_prob(state, i, j)
                        assert el[i, j] <= np.log(ep) + 1e-12

    def test_flipping_a_cell_to_the_unlikely_value_lowers_the_term(self):
        state, data = random_instance(17, n=5, k=2, l=4, missing=0.2)
        probs = feature_probs(state)
        base = feature_term(state, data)
        for i in range(5):
            for l in range(4):
                if np.isnan(data.features[i, l]):
                    continue
                unlikely = 1.0 if probs[i, l] < 0.5 else 0.0
                if data.features[i, l] == unlikely:
                    continue
                flipped = data.copy()
                flipped.features[i, l] = unlikely
                assert feature_term(state, flipped) <= base + 1e-12
