"""Acceptance suite: one test per acceptance criterion, each printing a
PASS/FAIL line (run with ``pytest tests/test_acceptance.py -s`` to see them).

Criterion 1 (real-dataset reproduction) runs only when the converted
Sichuan CSVs are available (data/sichuan or $COSTGAT_SICHUAN_DIR); in this
environment it is replaced by criterion 2, declared explicitly via the skip
message, as the criterion itself provides.
"""

import os
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

import costgat as cg
from costgat import autodiff as ad
from costgat.boosting import verify_bound
from costgat.gat import GatConfig, gat_loss, masked_cross_entropy
from costgat.graphdata import SplitSpec, load_graph, stratified_split
from costgat.synthetic import SyntheticSpec, generate_synthetic
from costgat.training import evaluate_model, train_ensemble

from oracles import (central_difference, ensemble_reference,
                     pairwise_auc_reference, relative_error, samme_reference)

RESULTS = []


def report(criterion: str, passed: bool, detail: str = ""):
    line = f"[{'PASS' if passed else 'FAIL'}] {criterion}" + (f" — {detail}" if detail else "")
    print("\n" + line)
    RESULTS.append(line)
    assert passed, line


def sichuan_dir():
    env = os.environ.get("COSTGAT_SICHUAN_DIR")
    for candidate in ([Path(env)] if env else []) + [Path("data/sichuan")]:
        if candidate.is_dir() and (candidate / "nodes.csv").exists() \
                and (candidate / "edges.csv").exists():
            return candidate
    return None


# ---------------------------------------------------------------------------
# criterion 1: real-dataset reproduction (Sichuan)
# ---------------------------------------------------------------------------

def test_criterion_1_sichuan_reproduction():
    data = sichuan_dir()
    if data is None:
        print("\n[SKIP] criterion 1 — Sichuan conversion not available; "
              "criterion 2 replaces it (declared per the criterion text)")
        pytest.skip("Sichuan dataset absent: criterion 2 replaces criterion 1")
    g = load_graph(data / "nodes.csv", data / "edges.csv")
    assert g.num_nodes == 6106 and g.num_classes == 2 and g.feature_dim == 55
    g = stratified_split(g, SplitSpec(0.2, 0.2, 0.6, seed=0))
    cfg = GatConfig(hid=128, heads=1, epochs=100, learning_rate=0.002,
                    dropout=0.0, adj_dropout=0.4, attention_loss_weight=0.5,
                    attention_weight=0.1, feature_weight=0.1)
    result = train_ensemble(g, cfg, 2, cost_scheme="log1p", seed=0)
    rep = evaluate_model(result.model, g, "test")
    report("criterion 1 (Sichuan log1p reproduction)",
           rep.macro_auc >= 0.91 and rep.g_mean >= 0.86,
           f"macro_auc={rep.macro_auc:.4f} g_mean={rep.g_mean:.4f}")


# ---------------------------------------------------------------------------
# criterion 2: cost-sensitivity effect on synthetic imbalanced graphs
# ---------------------------------------------------------------------------

CRIT2_IRS = (0.05, 0.1, 0.2)
CRIT2_SEEDS = tuple(range(10))
CRIT2_MINORITY = 64
CRIT2_FLIPS_TO_MAJORITY = 3   # train minority nodes relabeled majority
CRIT2_FLIPS_TO_MINORITY = 2   # train majority nodes relabeled minority
CRIT2_EPOCHS = 200
CRIT2_STAGES = 3


def crit2_graph(ir: float, seed: int):
    """Imbalanced homophilous graph with train-label noise.

    A few training nodes on each side carry the other side's label, the
    impurity real fraud labels have. Generation is count-compensated so the
    post-flip class counts — hence the imbalance ratio — hit the target
    exactly.
    """
    k_mm = CRIT2_FLIPS_TO_MAJORITY
    k_min = CRIT2_FLIPS_TO_MINORITY
    n_min = CRIT2_MINORITY
    n_maj = int(round(n_min / ir))
    spec = SyntheticSpec(nodes_per_class=(n_min + k_mm - k_min, n_maj - k_mm + k_min),
                         intra_class_edge_prob=0.05,
                         inter_class_edge_prob=3.0 / n_maj, feature_dim=2,
                         class_mean_separation=1.4, feature_noise_std=1.0, seed=seed)
    g = stratified_split(generate_synthetic(spec), SplitSpec(0.2, 0.2, 0.6, seed=seed))
    rng = np.random.default_rng(seed + 7919)
    tr_min = np.flatnonzero(g.train_mask & (g.labels == 0))
    tr_maj = np.flatnonzero(g.train_mask & (g.labels == 1))
    labels = g.labels.copy()
    labels[rng.choice(tr_min, k_mm, replace=False)] = 1
    labels[rng.choice(tr_maj, k_min, replace=False)] = 0
    return replace(g, labels=labels)


def crit2_recall(g, scheme: str, seed: int) -> float:
    cfg = GatConfig(hid=2, heads=1, epochs=CRIT2_EPOCHS, learning_rate=0.03,
                    attention_weight=0.5, feature_weight=0.5,
                    attention_loss_weight=0.1)
    result = train_ensemble(g, cfg, CRIT2_STAGES, cost_scheme=scheme, seed=seed)
    return evaluate_model(result.model, g, "test").macro_recall


def test_criterion_2_cost_sensitivity_effect():
    started = time.time()
    lines = []
    ok = True
    for ir in CRIT2_IRS:
        wins = {"inverse": 0, "log1p": 0}
        for seed in CRIT2_SEEDS:
            g = crit2_graph(ir, seed)
            assert cg.imbalance_ratio(g) == pytest.approx(ir, abs=0.01)
            uniform = crit2_recall(g, "uniform", seed)
            for scheme in wins:
                if crit2_recall(g, scheme, seed) > uniform:
                    wins[scheme] += 1
        lines.append(f"IR {ir}: inverse {wins['inverse']}/10, log1p {wins['log1p']}/10")
        ok = ok and wins["inverse"] >= 8 and wins["log1p"] >= 8
    elapsed = time.time() - started
    report("criterion 2 (inverse/log1p beat uniform on macro recall)",
           ok and elapsed <= 300.0, "; ".join(lines) + f"; {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# criterion 3: the cumulative-cost bound holds on randomized trained models
# ---------------------------------------------------------------------------

def test_criterion_3_bound_verifier():
    started = time.time()
    rng = np.random.default_rng(0)
    schemes = ("uniform", "inverse", "log1p")
    violations = 0
    for idx in range(20):
        k = int(rng.integers(2, 4))
        stages = int(rng.integers(1, 4))
        counts = tuple(int(rng.integers(8, 30)) for _ in range(k))
        spec = SyntheticSpec(nodes_per_class=counts, intra_class_edge_prob=0.3,
                             inter_class_edge_prob=0.08, feature_dim=4,
                             class_mean_separation=float(rng.uniform(0.5, 3.0)),
                             feature_noise_std=1.0, seed=int(rng.integers(0, 2**31)))
        g = stratified_split(generate_synthetic(spec),
                             SplitSpec(0.4, 0.2, 0.4, seed=int(rng.integers(0, 2**31))))
        cfg = GatConfig(hid=4, heads=1, epochs=int(rng.integers(5, 25)),
                        learning_rate=0.02)
        result = train_ensemble(g, cfg, stages, cost_scheme=schemes[idx % 3],
                                seed=int(rng.integers(0, 2**31)))
        if not verify_bound(result.model).holds:
            violations += 1
    elapsed = time.time() - started
    report("criterion 3 (bound verifier, 20 randomized models)",
           violations == 0 and elapsed <= 120.0,
           f"violations={violations}; {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# criterion 4: full-model gradients vs central finite differences
# ---------------------------------------------------------------------------

def test_criterion_4_gradient_correctness():
    started = time.time()
    from costgat.gat import _StageParams, _stage_forward
    from costgat.graphdata import build_graph

    rng = np.random.default_rng(11)
    n = 7
    g = build_graph(n, rng.integers(0, n, size=(10, 2)),
                    rng.standard_normal((n, 3)),
                    np.array([0, 1, 0, 1, 1, 0, 1]))
    g = stratified_split(g, SplitSpec(0.5, 0.25, 0.25, seed=0))
    cfg = GatConfig(hid=3, heads=2, gat_layers=2, epochs=0,
                    attention_loss_weight=0.6, mlp_loss_weight=1.2,
                    attention_weight=0.7, feature_weight=1.2)
    weights = np.zeros(n)
    weights[g.train_mask] = 1.0 / g.train_mask.sum()
    params = _StageParams(np.random.default_rng(5), 3, 2, cfg, 3)
    x_const = ad.constant(g.features)

    def loss_tensor():
        out = _stage_forward(params, g, x_const, cfg, rng=None, training=False,
                             chain_mode="attention")
        lg = gat_loss(out["embeddings"], params.gat_head, g.labels, g.train_mask,
                      weights)
        lm = masked_cross_entropy(out["mix_probs"], g.labels, g.train_mask, weights)
        return ad.add(ad.scale(lg, cfg.attention_loss_weight),
                      ad.scale(lm, cfg.mlp_loss_weight))

    with ad.Tape() as tape:
        loss = loss_tensor()
    tape.backward(loss)
    tensors = params.all_tensors()
    numeric = central_difference(lambda: loss_tensor().item(),
                                 [t.values for t in tensors])
    worst = max(relative_error(t.grad, num) for t, num in zip(tensors, numeric))
    elapsed = time.time() - started
    report("criterion 4 (full-model gradient check)",
           worst <= 1e-4 and elapsed <= 30.0,
           f"worst relative error={worst:.2e} over {len(tensors)} parameter arrays; "
           f"{elapsed:.0f}s")


# ---------------------------------------------------------------------------
# criterion 5: brute-force oracle equivalence on 100 randomized instances
# ---------------------------------------------------------------------------

def test_criterion_5_oracle_equivalence():
    started = time.time()
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(3, 12))
        k = int(rng.integers(2, 5))

        raw = rng.random((n, k)) + 1e-6
        probs = raw / raw.sum(axis=1, keepdims=True)
        worst = max(worst, np.abs(cg.samme_r_scores(probs)
                                  - samme_reference(probs)).max())

        stage_scores = [rng.standard_normal((n, k)) for _ in range(int(rng.integers(1, 4)))]

        class Stage:
            def __init__(self, s):
                self.scores = s

        pred, agg = cg.ensemble_decision([Stage(s) for s in stage_scores])
        ref_pred, ref_agg = ensemble_reference(stage_scores)
        assert np.array_equal(pred, ref_pred)
        worst = max(worst, np.abs(agg - ref_agg).max())

        truth = rng.integers(0, k, n)
        if len(np.unique(truth)) >= 2:
            scores = np.round(rng.random((n, k)), 1)
            import warnings as _w
            with _w.catch_warnings():
                _w.simplefilter("ignore")
                got = cg.macro_auc(scores, truth)
            worst = max(worst, abs(got - pairwise_auc_reference(scores, truth)))

        edges = rng.integers(0, n, size=(2 * n, 2))
        g = cg.build_graph(n, edges, rng.standard_normal((n, 3)),
                           np.zeros(n, dtype=int))
        att = cg.attention_coefficients(g, g.features, rng.standard_normal((3, 2)),
                                        rng.standard_normal(4))
        x = rng.standard_normal((n, 3))
        beta, gamma = rng.random(2) + 0.1
        dense = (beta * att.to_dense()) @ (gamma * x)
        worst = max(worst, np.abs(cg.feature_update(att, x, beta, gamma)
                                  - dense).max())
    elapsed = time.time() - started
    report("criterion 5 (oracle equivalence, 100 randomized instances)",
           worst <= 1e-9 and elapsed <= 60.0,
           f"worst abs deviation={worst:.2e}; {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# criterion 6: over-smoothing stability vs the stacked ablation
# ---------------------------------------------------------------------------

def test_criterion_6_over_smoothing_stability():
    started = time.time()
    spec = SyntheticSpec(nodes_per_class=(60, 140), intra_class_edge_prob=0.06,
                         inter_class_edge_prob=0.02, feature_dim=6,
                         class_mean_separation=2.5, feature_noise_std=1.0, seed=0)
    g = stratified_split(generate_synthetic(spec), SplitSpec(0.4, 0.2, 0.4, seed=0))
    cfg = GatConfig(hid=4, heads=1, epochs=100, learning_rate=0.05,
                    attention_weight=0.3, feature_weight=0.3)
    boosted, stacked = [], []
    for depth in range(1, 10):
        res = train_ensemble(g, cfg, depth, cost_scheme="log1p", seed=0)
        boosted.append(evaluate_model(res.model, g, "test").g_mean)
        deep = replace(cfg, gat_layers=depth)
        res2 = train_ensemble(g, deep, 1, cost_scheme="log1p", seed=0,
                              chain_mode="embedding")
        stacked.append(evaluate_model(res2.model, g, "test").g_mean)
    spread = max(boosted) - min(boosted)
    degradation = max(stacked) - min(stacked)
    deepest_loss = max(stacked) - stacked[-1]
    elapsed = time.time() - started
    report("criterion 6 (depth stability vs stacked ablation)",
           spread <= 0.05 and degradation >= 0.10 and elapsed <= 600.0,
           f"boosted spread={spread:.3f}, stacked spread={degradation:.3f} "
           f"(loss at depth 9: {deepest_loss:.3f}); {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# criterion 7: module invariants as property checks
# ---------------------------------------------------------------------------

def test_criterion_7_invariant_suite():
    started = time.time()
    rng = np.random.default_rng(3)
    checks = []

    # cost-matrix reciprocity (inverse scheme)
    for _ in range(20):
        counts = rng.integers(1, 400, size=int(rng.integers(2, 5)))
        cm = cg.build_cost_matrix(counts, "inverse")
        checks.append(np.allclose(cm.matrix * cm.matrix.T, 1.0, rtol=1e-12))

    # samme scores zero-sum, weights normalized, attention row-stochastic
    spec = SyntheticSpec(nodes_per_class=(18, 42), intra_class_edge_prob=0.2,
                         inter_class_edge_prob=0.05, feature_dim=4,
                         class_mean_separation=2.0, feature_noise_std=0.8, seed=1)
    g = stratified_split(generate_synthetic(spec), SplitSpec(0.4, 0.2, 0.4, seed=1))
    cfg = GatConfig(hid=4, heads=2, epochs=15, learning_rate=0.05,
                    attention_weight=0.5, feature_weight=0.5)
    result = train_ensemble(g, cfg, 3, cost_scheme="log1p", seed=2)
    for w in result.weight_history:
        checks.append(abs(w.sum() - 1.0) <= 1e-9 and np.all(w >= 0))
    for stage in result.model.stages:
        checks.append(np.allclose(stage.attention.row_sums(), 1.0, atol=1e-6))
        checks.append(np.allclose(stage.scores.sum(axis=1), 0.0, atol=1e-6))
        checks.append(np.allclose(stage.probs.sum(axis=1), 1.0, atol=1e-6))

    # determinism: identical seeds give identical models and reports
    again = train_ensemble(g, cfg, 3, cost_scheme="log1p", seed=2)
    checks.append(np.array_equal(result.model.stages[-1].probs,
                                 again.model.stages[-1].probs))
    a = evaluate_model(result.model, g, "test").to_json(include_timing=False)
    b = evaluate_model(again.model, g, "test").to_json(include_timing=False)
    checks.append(a == b)

    elapsed = time.time() - started
    report("criterion 7 (invariant property suite)",
           all(checks) and elapsed <= 120.0,
           f"{len(checks)} checks; {elapsed:.0f}s")
