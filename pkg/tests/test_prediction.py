"""Fold-in, link scoring, feature imputation, and node classification."""

import numpy as np
import pytest

from groupnet.datatypes import Dataset, Hyperparams
from groupnet.errors import DataFormatError, UsageError
from groupnet.fitting import fit
from groupnet.model import expected_edge_prob
from groupnet.prediction import (classify_nodes, fold_in_node,
                                 predict_links, predict_missing_features)

from conftest import make_state, random_instance


def snapshot(state):
    return (state.memberships.phi.copy(), state.weights.w.copy(),
            state.affinities.theta.copy())


class TestFoldIn:
    def test_unobserved_node_with_flat_prior_stays_uniform(self):
        state, data = random_instance(100, n=6, k=2, l=3)
        feats = data.features.copy()
        feats[2] = np.nan
        adj = data.adjacency.copy()
        adj[2, :] = 0
        adj[:, 2] = 0
        blank = Dataset(adj, feats, data.node_ids)
        row = fold_in_node(state, blank, 2, observe="features-only")
        # no feature evidence and no links used: gradient is zero at 0.5
        assert np.all(row == 0.5)

    def test_identical_feature_rows_fold_to_identical_memberships(self):
        state, data = random_instance(101, n=8, k=2, l=4)
        feats = data.features.copy()
        feats[5] = feats[1]
        twin = Dataset(data.adjacency, feats, data.node_ids)
        r1 = fold_in_node(state, twin, 1, observe="features-only")
        r2 = fold_in_node(state, twin, 5, observe="features-only")
        assert np.allclose(r1, r2, atol=1e-12)

    def test_strong_feature_signal_moves_membership_toward_group(self):
        # group 0 drives every feature strongly positive
        w = np.zeros((6, 3))
        w[:, 0] = 6.0
        w[:, 2] = -3.0
        phi = np.full((5, 2), 0.5)
        theta = np.tile(np.array([[[0.2, 0.2], [0.2, 0.2]]]), (2, 1, 1))
        state = make_state(phi, theta, w=w)
        feats = np.zeros((5, 6))
        feats[0] = 1.0
        data = Dataset(np.zeros((5, 5), dtype=np.uint8), feats,
                       [f"v{i}" for i in range(5)])
        on = fold_in_node(state, data, 0, observe="features-only")
        off = fold_in_node(state, data, 1, observe="features-only")
        assert on[0] > 0.9
        assert off[0] < 0.1

    def test_model_state_is_never_mutated(self):
        state, data = random_instance(102, n=7, k=2, l=3)
        before = snapshot(state)
        for channel in ("features-only", "links-only", "both"):
            fold_in_node(state, data, 4, observe=channel)
        after = snapshot(state)
        for a, b in zip(before, after):
            assert np.array_equal(a, b)

    def test_node_id_and_channel_validation(self):
        state, data = random_instance(103, n=5, k=1, l=2)
        with pytest.raises(DataFormatError):
            fold_in_node(state, data, "nope")
        with pytest.raises(UsageError):
            fold_in_node(state, data, 0, observe="telepathy")

    def test_accepts_string_node_ids(self):
        state, data = random_instance(104, n=5, k=1, l=2)
        by_index = fold_in_node(state, data, 3)
        by_name = fold_in_node(state, data, data.node_ids[3])
        assert np.array_equal(by_index, by_name)


class TestPredictMissingFeatures:
    def test_zero_weights_with_zero_intercepts_give_half(self):
        state, data = random_instance(110, n=6, k=2, l=4, missing=0.3)
        state.weights.w[:] = 0.0
        u = int(np.argmax((~data.observed).sum(axis=1)))
        res = predict_missing_features(state, data, u)
        assert len(res.scores) > 0
        assert all(p == 0.5 for _, p in res.scores)

    def test_positive_intercept_pushes_probability_up(self):
        state, data = random_instance(111, n=6, k=2, l=4, missing=0.4)
        state.weights.w[:] = 0.0
        state.weights.w[:, -1] = 2.0
        u = int(np.argmax((~data.observed).sum(axis=1)))
        res = predict_missing_features(state, data, u)
        assert len(res.scores) > 0
        assert all(p > 0.5 for _, p in res.scores)

    def test_scores_align_with_missing_columns(self):
        state, data = random_instance(112, n=8, k=2, l=5, missing=0.35)
        u = int(np.argmax((~data.observed).sum(axis=1)))
        res = predict_missing_features(state, data, u)
        missing_cols = np.flatnonzero(~data.observed[u])
        assert res.target == "features"
        assert res.node == data.node_ids[u]
        assert [l for l, _ in res.scores] == missing_cols.tolist()
        again = predict_missing_features(state, data, u)
        assert res.scores == again.scores

    def test_truth_dict_yields_loglik(self):
        state, data = random_instance(113, n=6, k=1, l=4, missing=0.4)
        u = int(np.argmax((~data.observed).sum(axis=1)))
        miss = np.flatnonzero(~data.observed[u])
        truth = {int(l): 1 for l in miss}
        res = predict_missing_features(state, data, u, truth=truth)
        assert res.loglik is not None and np.isfinite(res.loglik)
        by_hand = sum(np.log(max(min(p, 1 - 1e-12), 1e-12))
                      for _, p in res.scores)
        assert res.loglik == pytest.approx(by_hand, rel=1e-12)

    def test_truth_subset_only_counts_listed_cells(self):
        state, data = random_instance(114, n=6, k=1, l=5, missing=0.5)
        u = int(np.argmax((~data.observed).sum(axis=1)))
        miss = np.flatnonzero(~data.observed[u])
        assert miss.size >= 2
        l0 = int(miss[0])
        res = predict_missing_features(state, data, u, truth={l0: 0})
        p0 = dict(res.scores)[l0]
        want = np.log(1 - min(max(p0, 1e-12), 1 - 1e-12))
        assert res.loglik == pytest.approx(want, rel=1e-12)


class TestPredictLinks:
    def test_requires_matching_holdout_protocol(self):
        _, data = random_instance(120, n=10, k=2, l=3)
        hyper = Hyperparams(max_outer_iters=5)
        model, _ = fit(data, 2, hyper, holdout_node=4)
        res = predict_links(model, data, 4)
        assert len(res.scores) == 9 and len(res.scores_in) == 9
        assert [j for j, _ in res.scores] == [j for j in range(10) if j != 4]
        with pytest.raises(UsageError):
            predict_links(model, data, 5)
        plain, _ = fit(data, 2, hyper)
        with pytest.raises(UsageError):
            predict_links(plain, data, 4)

    def test_constant_affinity_scores_are_flat(self):
        _, data = random_instance(121, n=8, k=2, l=3)
        hyper = Hyperparams(max_outer_iters=3)
        model, _ = fit(data, 2, hyper, holdout_node=2)
        model.affinities.theta[:] = 0.3
        res = predict_links(model, data, 2)
        for _, p in res.scores + res.scores_in:
            assert p == pytest.approx(0.09, abs=1e-12)

    def test_scores_match_pairwise_edge_probabilities(self):
        _, data = random_instance(122, n=9, k=2, l=4)
        hyper = Hyperparams(max_outer_iters=6)
        model, _ = fit(data, 2, hyper, holdout_node=0)
        folded = fold_in_node(model, data, 0, observe="features-only")
        probe = model.copy()
        probe.memberships.phi[0] = folded
        res = predict_links(model, data, 0)
        for (j, p_out), (j2, p_in) in zip(res.scores, res.scores_in):
            assert j == j2
            assert p_out == pytest.approx(
                expected_edge_prob(probe, 0, j), abs=1e-12)
            assert p_in == pytest.approx(
                expected_edge_prob(probe, j, 0), abs=1e-12)

    def test_loglik_sums_clamped_bernoulli_terms(self):
        _, data = random_instance(125, n=8, k=2, l=3, edge_p=0.3)
        hyper = Hyperparams(max_outer_iters=4)
        model, _ = fit(data, 2, hyper, holdout_node=3)
        res = predict_links(model, data, 3)
        want = 0.0
        for (j, p_out), (_, p_in) in zip(res.scores, res.scores_in):
            po = min(max(p_out, 1e-12), 1 - 1e-12)
            pi = min(max(p_in, 1e-12), 1 - 1e-12)
            want += np.log(po if data.adjacency[3, j] else 1 - po)
            want += np.log(pi if data.adjacency[j, 3] else 1 - pi)
        assert res.loglik == pytest.approx(want, rel=1e-12)

    def test_undirected_mode_combines_directions(self):
        _, data = random_instance(123, n=8, k=2, l=3)
        hyper = Hyperparams(max_outer_iters=4)
        model, _ = fit(data, 2, hyper, holdout_node=1)
        res = predict_links(model, data, 1, undirected=True)
        directed = predict_links(model, data, 1)
        assert res.scores_in is None
        p_in = dict(directed.scores_in)
        for (j, pair), (j2, p_out) in zip(res.scores, directed.scores):
            assert j == j2
            assert pair == pytest.approx(
                1 - (1 - p_out) * (1 - p_in[j]), abs=1e-12)

    def test_homophilous_model_separates_groups(self):
        # features announce the groups, affinities reward matching bits
        n, k = 30, 2
        rng = np.random.default_rng(124)
        z = rng.integers(0, 2, size=(n, k))
        phi = np.clip(z.astype(np.float64), 1e-3, 1 - 1e-3)
        theta = np.tile(np.array([[[0.4, 0.05], [0.05, 0.6]]]), (k, 1, 1))
        w = np.array([[8.0, 0.0, -4.0], [8.0, 0.0, -4.0],
                      [0.0, 8.0, -4.0], [0.0, 8.0, -4.0]])
        state = make_state(phi, theta, w=w)
        state.holdout_node = 0
        feats = np.column_stack([z[:, 0], z[:, 0], z[:, 1], z[:, 1]])
        data = Dataset(np.zeros((n, n), dtype=np.uint8),
                       feats.astype(np.float64),
                       [f"v{i}" for i in range(n)])
        res = predict_links(state, data, 0)
        same, cross = [], []
        for j, p in res.scores:
            (same if np.array_equal(z[j], z[0]) else cross).append(p)
        assert same and cross
        assert np.mean(same) > np.mean(cross)


class TestClassifyNodes:
    @staticmethod
    def probs(results):
        return np.array([r.scores[0][1] for r in results])

    def test_all_positive_training_labels_predict_positive(self):
        _, data = random_instance(130, n=14, k=2, l=4)
        feats = data.features.copy()
        feats[:, 1] = 1.0
        full = Dataset(data.adjacency, feats, data.node_ids)
        train = np.zeros(14, dtype=bool)
        train[:10] = True
        hyper = Hyperparams(max_outer_iters=8)
        results = classify_nodes(full, 1, train, 2, hyper)
        assert len(results) == 4
        for r in results:
            assert r.target == "label"
            assert r.scores[0][0] == 1
        assert np.all(self.probs(results) > 0.5)

    def test_results_cover_exactly_the_test_nodes(self):
        _, data = random_instance(133, n=10, k=1, l=3)
        train = np.zeros(10, dtype=bool)
        train[[0, 2, 4, 6, 8]] = True
        hyper = Hyperparams(max_outer_iters=4)
        results = classify_nodes(data, 0, train, 1, hyper)
        assert [r.node for r in results] == \
            [data.node_ids[i] for i in np.flatnonzero(~train)]
        # test nodes with an actual held-out bit carry a loglik
        for r, i in zip(results, np.flatnonzero(~train)):
            if data.observed[i, 0]:
                assert r.loglik is not None

    def test_group_aligned_labels_beat_chance(self):
        rng = np.random.default_rng(131)
        n = 40
        z = rng.integers(0, 2, size=n)
        adj = np.zeros((n, n), dtype=np.uint8)
        for i in range(n):
            for j in range(n):
                if i != j:
                    p = 0.4 if z[i] == z[j] else 0.03
                    adj[i, j] = rng.random() < p
        feats = np.column_stack([
            z.astype(np.float64),
            rng.integers(0, 2, size=n).astype(np.float64)])
        data = Dataset(adj, feats, [f"v{i}" for i in range(n)])
        train = np.zeros(n, dtype=bool)
        train[: n // 2] = True
        hyper = Hyperparams(max_outer_iters=20, seed=1)
        results = classify_nodes(data, 0, train, 2, hyper)
        truth = z[~train]
        assert truth.min() != truth.max()
        scores = self.probs(results)
        assert scores[truth == 1].mean() > scores[truth == 0].mean()

    def test_argument_validation(self):
        _, data = random_instance(132, n=8, k=1, l=3)
        train = np.zeros(8, dtype=bool)
        train[:4] = True
        hyper = Hyperparams(max_outer_iters=3)
        with pytest.raises(UsageError):
            classify_nodes(data, 7, train, 1, hyper)
        with pytest.raises(UsageError):
            classify_nodes(data, 0, train[:5], 1, hyper)
        blank = data.copy()
        blank.features[:, 0] = np.nan
        with pytest.raises(DataFormatError):
            classify_nodes(blank, 0, train, 1, hyper)

    def test_random_labels_hover_near_chance(self):
        from groupnet.baselines import evaluate
        aucs = []
        for seed in range(10):
            rng = np.random.default_rng([200, seed])
            _, data = random_instance(seed + 300, n=24, k=2, l=4,
                                      edge_p=0.15)
            labels = rng.integers(0, 2, size=24).astype(np.float64)
            feats = np.column_stack([labels, data.features[:, 1:]])
            full = Dataset(data.adjacency, feats, data.node_ids)
            train = np.zeros(24, dtype=bool)
            train[rng.permutation(24)[:16]] = True
            truth = labels[~train]
            if truth.min() == truth.max():
                continue
            hyper = Hyperparams(max_outer_iters=6, seed=seed)
            results = classify_nodes(full, 0, train, 2, hyper)
            m = evaluate(zip(self.probs(results), truth))
            if m.auc is not None:
                aucs.append(m.auc)
        assert len(aucs) >= 6
        assert 0.3 <= float(np.mean(aucs)) <= 0.7
