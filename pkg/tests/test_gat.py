import numpy as np
import numpy.testing as npt
import pytest

from costgat import autodiff as ad
from costgat.errors import ContractError, DimensionError, TrainingError
from costgat.gat import (GatConfig, SparseAttention, attention_coefficients,
                         feature_update, gat_forward, gat_loss, glorot,
                         masked_cross_entropy, mixed_linear_probs,
                         train_weak_classifier)
from costgat.graphdata import SplitSpec, build_graph, stratified_split
from costgat.synthetic import SyntheticSpec, generate_synthetic

from oracles import (central_difference, dense_attention_reference,
                     nearest_mean_accuracy, relative_error)


def path_graph(n, feature_dim=2, self_loops=True, seed=0):
    rng = np.random.default_rng(seed)
    edges = [[i, i + 1] for i in range(n - 1)]
    labels = np.arange(n) % 2
    return build_graph(n, edges, rng.standard_normal((n, feature_dim)), labels,
                       add_self_loops=self_loops)


def dense_adjacency(g):
    dense = np.zeros((g.num_nodes, g.num_nodes), dtype=bool)
    dense[g.edge_sources(), g.csr_targets] = True
    return dense


class TestAttentionCoefficients:
    def test_zero_attention_vector_gives_uniform(self):
        g = path_graph(4)
        att = attention_coefficients(g, g.features, np.eye(2), np.zeros(4))
        degrees = np.diff(att.offsets)
        for node in range(4):
            seg = att.values[att.offsets[node]:att.offsets[node + 1]]
            npt.assert_allclose(seg, np.full(degrees[node], 1.0 / degrees[node]))

    def test_single_neighbor_gets_full_weight(self):
        g = build_graph(2, [[0, 1]], np.random.default_rng(1).standard_normal((2, 2)),
                        [0, 1], add_self_loops=False)
        rng = np.random.default_rng(2)
        att = attention_coefficients(g, g.features, rng.standard_normal((2, 3)),
                                     rng.standard_normal(6))
        npt.assert_allclose(att.values, np.ones(2))

    def test_three_node_path_matches_scalar_reference(self):
        g = path_graph(3, feature_dim=2, seed=3)
        weight = np.eye(2)
        attn = np.array([1.0, 0.0, 1.0, 0.0])
        att = attention_coefficients(g, g.features, weight, attn)
        ref = dense_attention_reference(g.features, dense_adjacency(g), weight,
                                        attn.reshape(-1, 1))
        npt.assert_allclose(att.to_dense(), ref, atol=1e-12)

    def test_random_graphs_match_scalar_reference(self):
        rng = np.random.default_rng(4)
        for trial in range(5):
            n = int(rng.integers(3, 9))
            edges = rng.integers(0, n, size=(2 * n, 2))
            g = build_graph(n, edges, rng.standard_normal((n, 3)),
                            np.zeros(n, dtype=int))
            weight = rng.standard_normal((3, 4))
            attn = rng.standard_normal(8)
            att = attention_coefficients(g, g.features, weight, attn)
            ref = dense_attention_reference(g.features, dense_adjacency(g), weight,
                                            attn.reshape(-1, 1))
            npt.assert_allclose(att.to_dense(), ref, atol=1e-10)

    def test_rows_stochastic_on_support_zero_off_support(self):
        g = path_graph(6, seed=5)
        rng = np.random.default_rng(6)
        att = attention_coefficients(g, g.features, rng.standard_normal((2, 3)),
                                     rng.standard_normal(6))
        dense = att.to_dense()
        npt.assert_allclose(dense.sum(axis=1), np.ones(6), atol=1e-6)
        assert np.all(dense[~dense_adjacency(g)] == 0.0)

    def test_width_mismatch(self):
        g = path_graph(3)
        with pytest.raises(DimensionError):
            attention_coefficients(g, g.features, np.eye(3), np.zeros(6))


class TestGatForward:
    def test_uniform_attention_identity_transform_is_neighbor_mean(self):
        g = path_graph(5, feature_dim=2, seed=7)
        out = gat_forward(g, g.features, [(np.eye(2), np.zeros(4))],
                          activation="identity", combine="mean")
        dense = dense_adjacency(g).astype(float)
        expected = (dense / dense.sum(axis=1, keepdims=True)) @ g.features
        npt.assert_allclose(out, expected, atol=1e-12)

    def test_zero_features_zero_embeddings(self):
        g = path_graph(4)
        zero = np.zeros((4, 2))
        out = gat_forward(g, zero, [(np.ones((2, 3)), np.ones(6))],
                          activation="identity")
        npt.assert_allclose(out, np.zeros((4, 3)))

    def test_two_heads_concat_equals_two_single_head_passes(self):
        # 4-node star
        g = build_graph(4, [[0, 1], [0, 2], [0, 3]],
                        np.random.default_rng(8).standard_normal((4, 3)),
                        [0, 1, 0, 1])
        rng = np.random.default_rng(9)
        heads = [(rng.standard_normal((3, 2)), rng.standard_normal(4))
                 for _ in range(2)]
        both = gat_forward(g, g.features, heads, combine="concat")
        first = gat_forward(g, g.features, [heads[0]], combine="concat")
        second = gat_forward(g, g.features, [heads[1]], combine="concat")
        npt.assert_allclose(both, np.concatenate([first, second], axis=1), atol=1e-12)


class TestFeatureUpdate:
    def identity_attention(self, n):
        offsets = np.arange(n + 1, dtype=np.int64)
        targets = np.arange(n, dtype=np.int64)
        return SparseAttention(offsets=offsets, targets=targets,
                               values=np.ones(n), num_nodes=n)

    def test_identity_attention_unit_weights_is_identity(self):
        x = np.random.default_rng(10).standard_normal((4, 3))
        out = feature_update(self.identity_attention(4), x, 1.0, 1.0)
        npt.assert_allclose(out, x, atol=1e-12)

    def test_bilinear_scaling(self):
        g = path_graph(5, seed=11)
        rng = np.random.default_rng(12)
        att = attention_coefficients(g, g.features, rng.standard_normal((2, 3)),
                                     rng.standard_normal(6))
        x = rng.standard_normal((5, 2))
        one = feature_update(att, x, 0.7, 1.3)
        double = feature_update(att, x, 1.4, 1.3)
        npt.assert_allclose(double, 2.0 * one, atol=1e-12)

    def test_uniform_attention_is_neighborhood_mean(self):
        g = path_graph(3, seed=13)
        att = attention_coefficients(g, g.features, np.eye(2), np.zeros(4))
        x = np.random.default_rng(14).standard_normal((3, 2))
        out = feature_update(att, x, 1.0, 1.0)
        dense = dense_adjacency(g).astype(float)
        expected = (dense / dense.sum(axis=1, keepdims=True)) @ x
        npt.assert_allclose(out, expected, atol=1e-12)

    def test_dense_matmul_oracle_on_random_instances(self):
        rng = np.random.default_rng(15)
        for _ in range(10):
            n = int(rng.integers(3, 10))
            g = build_graph(n, rng.integers(0, n, size=(2 * n, 2)),
                            rng.standard_normal((n, 3)), np.zeros(n, dtype=int))
            att = attention_coefficients(g, g.features, rng.standard_normal((3, 2)),
                                         rng.standard_normal(4))
            x = rng.standard_normal((n, 4))
            beta, gamma = rng.random(2) + 0.1
            out = feature_update(att, x, beta, gamma)
            expected = (beta * att.to_dense()) @ (gamma * x)
            npt.assert_allclose(out, expected, atol=1e-9)

    def test_support_mismatch(self):
        g = path_graph(4)
        att = attention_coefficients(g, g.features, np.eye(2), np.zeros(4))
        with pytest.raises(ContractError):
            feature_update(att, np.zeros((5, 2)), 1.0, 1.0)


class TestMixedLinearProbs:
    def test_zero_weights_uniform(self):
        probs = mixed_linear_probs(np.random.default_rng(16).standard_normal((5, 3)),
                                   np.zeros((3, 4)))
        npt.assert_allclose(probs, np.full((5, 4), 0.25), atol=1e-12)

    def test_dominant_logit_saturates(self):
        x = np.array([[1.0]])
        w = np.array([[20.0, 0.0]])
        probs = mixed_linear_probs(x, w)
        assert probs[0, 0] >= 1.0 - 1e-8

    def test_matches_scalar_evaluation(self):
        rng = np.random.default_rng(17)
        x = rng.standard_normal((1, 3))
        w = rng.standard_normal((3, 2))
        probs = mixed_linear_probs(x, w)
        logits = np.maximum(x[0] @ w, 0.0)
        expected = np.exp(logits) / np.exp(logits).sum()
        npt.assert_allclose(probs[0], expected, atol=1e-12)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(18)
        probs = mixed_linear_probs(rng.standard_normal((20, 4)),
                                   rng.standard_normal((4, 3)))
        npt.assert_allclose(probs.sum(axis=1), np.ones(20), atol=1e-9)

    def test_constant_shift_invariance_in_positive_regime(self):
        rng = np.random.default_rng(19)
        x = rng.random((6, 2)) + 1.0
        w = rng.random((2, 3)) + 1.0  # all pre-activations strictly positive
        shifted = mixed_linear_probs(x, w)
        # adding a constant c to all logits cancels in the softmax
        logits = x @ w
        expected = np.exp(logits + 3.0)
        expected /= expected.sum(axis=1, keepdims=True)
        npt.assert_allclose(shifted, expected, atol=1e-12)


class TestLosses:
    def test_perfect_onehot_zero_loss(self):
        probs = ad.constant(np.array([[1.0, 0.0], [0.0, 1.0]]))
        labels = np.array([0, 1])
        loss = masked_cross_entropy(probs, labels, np.array([True, True]))
        assert loss.item() == 0.0

    def test_uniform_probs_ln_k_per_node(self):
        probs = ad.constant(np.full((3, 3), 1.0 / 3.0))
        labels = np.array([0, 1, 2])
        loss = masked_cross_entropy(probs, labels, np.ones(3, dtype=bool))
        npt.assert_allclose(loss.item(), 3 * np.log(3.0), atol=1e-9)

    def test_unlabeled_node_outside_mask_ignored(self):
        probs = ad.constant(np.array([[0.5, 0.5], [0.9, 0.1]]))
        labels = np.array([0, -1])
        mask = np.array([True, False])
        loss = masked_cross_entropy(probs, labels, mask)
        npt.assert_allclose(loss.item(), np.log(2.0), atol=1e-12)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(20)
        raw = rng.random((6, 2)) + 0.1
        probs = raw / raw.sum(axis=1, keepdims=True)
        labels = rng.integers(0, 2, 6)
        perm = rng.permutation(6)
        a = masked_cross_entropy(ad.constant(probs), labels, np.ones(6, bool)).item()
        b = masked_cross_entropy(ad.constant(probs[perm]), labels[perm],
                                 np.ones(6, bool)).item()
        npt.assert_allclose(a, b, atol=1e-12)

    def test_empty_mask_rejected(self):
        with pytest.raises(ContractError):
            masked_cross_entropy(ad.constant(np.ones((2, 1))), np.zeros(2, int),
                                 np.zeros(2, bool))

    def test_gat_loss_uniform_head(self):
        z = ad.constant(np.zeros((4, 3)))
        head = ad.constant(np.zeros((3, 2)))
        labels = np.array([0, 1, 0, 1])
        loss = gat_loss(z, head, labels, np.ones(4, bool))
        npt.assert_allclose(loss.item(), 4 * np.log(2.0), atol=1e-9)

    def test_mlp_loss_perfect_and_uniform(self):
        from costgat.gat import mlp_loss
        perfect = ad.constant(np.eye(3)[[0, 1, 2]])
        labels = np.array([0, 1, 2])
        assert mlp_loss(perfect, labels, np.ones(3, bool)).item() == 0.0
        uniform = ad.constant(np.full((2, 3), 1.0 / 3.0))
        loss = mlp_loss(uniform, np.array([0, 2]), np.ones(2, bool))
        npt.assert_allclose(loss.item(), 2 * np.log(3.0), atol=1e-12)

    def test_masked_label_out_of_range_rejected(self):
        probs = ad.constant(np.full((2, 2), 0.5))
        with pytest.raises(ContractError):
            masked_cross_entropy(probs, np.array([0, -1]), np.ones(2, bool))


def trained_toy(seed=0, epochs=40, **cfg_kwargs):
    spec = SyntheticSpec(nodes_per_class=(20, 20), intra_class_edge_prob=0.3,
                         inter_class_edge_prob=0.02, feature_dim=4,
                         class_mean_separation=10.0, feature_noise_std=0.5,
                         seed=seed)
    g = stratified_split(generate_synthetic(spec), SplitSpec(0.5, 0.2, 0.3, seed=seed))
    weights = np.zeros(g.num_nodes)
    weights[g.train_mask] = 1.0 / g.train_mask.sum()
    cfg = GatConfig(hid=4, heads=1, epochs=epochs, learning_rate=0.05, **cfg_kwargs)
    return g, weights, cfg


class TestTrainWeakClassifier:
    def test_zero_epochs_returns_initialized_near_uniform_state(self):
        g, weights, cfg = trained_toy(epochs=0)
        state, stats = train_weak_classifier(g, g.features, weights, cfg, seed=0)
        assert stats.losses == []
        npt.assert_allclose(state.probs.sum(axis=1), np.ones(g.num_nodes), atol=1e-9)
        # small-scale head init keeps the initial distribution near uniform
        assert np.abs(state.probs - 0.5).max() < 0.1

    def test_separable_graph_reaches_high_train_accuracy(self):
        g, weights, cfg = trained_toy(epochs=80)
        state, _ = train_weak_classifier(g, g.features, weights, cfg, seed=1)
        train = g.train_mask
        pred = np.argmax(state.probs[train], axis=1)
        acc = (pred == g.labels[train]).mean()
        assert acc >= 0.95

    def test_same_seed_bit_identical(self):
        g, weights, cfg = trained_toy(epochs=15)
        a, _ = train_weak_classifier(g, g.features, weights, cfg, seed=5)
        b, _ = train_weak_classifier(g, g.features, weights, cfg, seed=5)
        npt.assert_array_equal(a.mix_weight, b.mix_weight)
        npt.assert_array_equal(a.attention.values, b.attention.values)
        npt.assert_array_equal(a.probs, b.probs)

    def test_state_invariants(self):
        g, weights, cfg = trained_toy(epochs=10)
        state, _ = train_weak_classifier(g, g.features, weights, cfg, seed=2)
        npt.assert_allclose(state.attention.row_sums(), np.ones(g.num_nodes),
                            atol=1e-6)
        npt.assert_allclose(state.probs.sum(axis=1), np.ones(g.num_nodes), atol=1e-6)
        npt.assert_allclose(state.scores.sum(axis=1), np.zeros(g.num_nodes),
                            atol=1e-6)

    def test_loss_trend_non_increasing_on_separable_toy(self):
        g, weights, cfg = trained_toy(epochs=60)
        _, stats = train_weak_classifier(g, g.features, weights, cfg, seed=3)
        losses = np.asarray(stats.losses)
        upticks = (np.diff(losses) > 1e-9).sum()
        assert upticks <= 0.05 * len(losses)
        assert losses[-1] < losses[0]

    def test_bad_weights_rejected(self):
        g, weights, cfg = trained_toy()
        with pytest.raises(ContractError):
            train_weak_classifier(g, g.features, 2 * weights, cfg, seed=0)
        bad = weights.copy()
        bad[np.flatnonzero(~g.train_mask)[0]] = 0.5
        with pytest.raises(ContractError):
            train_weak_classifier(g, g.features, bad, cfg, seed=0)

    def test_divergence_reports_epoch(self):
        g, weights, cfg = trained_toy(epochs=40)
        poisoned = g.features.copy()
        poisoned[0, 0] = np.nan
        with pytest.raises(TrainingError, match="epoch 0"):
            train_weak_classifier(g, poisoned, weights, cfg, seed=0)

    def test_dropout_modes_still_deterministic(self):
        g, weights, _ = trained_toy()
        cfg = GatConfig(hid=4, heads=2, epochs=8, learning_rate=0.05,
                        dropout=0.3, adj_dropout=0.4)
        a, _ = train_weak_classifier(g, g.features, weights, cfg, seed=7)
        b, _ = train_weak_classifier(g, g.features, weights, cfg, seed=7)
        npt.assert_array_equal(a.probs, b.probs)

    def test_multihead_multilayer_shapes(self):
        g, weights, _ = trained_toy()
        cfg = GatConfig(hid=3, heads=2, gat_layers=2, epochs=4, learning_rate=0.05)
        state, stats = train_weak_classifier(g, g.features, weights, cfg, seed=8)
        assert state.weights[0][0].shape == (4, 3)   # input width 4
        assert state.weights[1][0].shape == (6, 3)   # concat of 2 heads of width 3
        assert state.mix_weight.shape == (4, 2)
        assert stats.chain_output.shape == (g.num_nodes, 4)

    def test_embedding_chain_mode(self):
        g, weights, cfg = trained_toy(epochs=5)
        state, stats = train_weak_classifier(g, g.features, weights, cfg, seed=9,
                                             chain_mode="embedding")
        assert state.chain_mode == "embedding"
        assert stats.chain_output.shape == (g.num_nodes, cfg.hid)
        assert state.mix_weight.shape == (cfg.hid, 2)


class TestFullModelGradients:
    def test_combined_loss_gradients_match_finite_differences(self):
        # 6-node graph, every parameter of the stage checked at rel 1e-4
        rng = np.random.default_rng(21)
        g = build_graph(6, rng.integers(0, 6, size=(8, 2)),
                        rng.standard_normal((6, 3)),
                        np.array([0, 1, 0, 1, 1, 0]))
        g = stratified_split(g, SplitSpec(0.5, 0.25, 0.25, seed=0))
        cfg = GatConfig(hid=3, heads=2, epochs=0, learning_rate=0.01,
                        attention_loss_weight=0.7, mlp_loss_weight=1.3,
                        attention_weight=0.8, feature_weight=1.1)
        weights = np.zeros(6)
        weights[g.train_mask] = 1.0 / g.train_mask.sum()

        from costgat.gat import _StageParams, _stage_forward

        params = _StageParams(np.random.default_rng(3), 3, 2, cfg, 3)
        tensors = params.all_tensors()
        x_const = ad.constant(g.features)

        def loss_value():
            out = _stage_forward(params, g, x_const, cfg, rng=None, training=False,
                                 chain_mode="attention")
            lg = gat_loss(out["embeddings"], params.gat_head, g.labels,
                          g.train_mask, weights)
            lm = masked_cross_entropy(out["mix_probs"], g.labels, g.train_mask,
                                      weights)
            return ad.add(ad.scale(lg, cfg.attention_loss_weight),
                          ad.scale(lm, cfg.mlp_loss_weight))

        with ad.Tape() as tape:
            loss = loss_value()
        tape.backward(loss)
        analytic = [t.grad.copy() for t in tensors]

        numeric = central_difference(lambda: loss_value().item(),
                                     [t.values for t in tensors])
        for got, want in zip(analytic, numeric):
            assert relative_error(got, want) < 1e-4


class TestGlorot:
    def test_bounds(self):
        rng = np.random.default_rng(22)
        w = glorot(rng, 30, 20)
        s = np.sqrt(6.0 / 50)
        assert np.all(np.abs(w) <= s)
        assert w.std() > 0


def test_sparse_attention_row_sums_with_empty_rows():
    att = SparseAttention(offsets=np.array([0, 2, 2, 3]),
                          targets=np.array([0, 1, 2]),
                          values=np.array([0.25, 0.75, 1.0]), num_nodes=3)
    npt.assert_allclose(att.row_sums(), [1.0, 0.0, 1.0])
