"""Training driver: stage-by-stage boosting of graph-attention weak
classifiers with cost-sensitive reweighting, plus model evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .boosting import (CostMatrix, EnsembleModel, build_cost_matrix,
                       ensemble_decision, misclassification_cost, update_weights)
from .errors import ContractError
from .gat import GatConfig, WeakClassifierState, stage_inference, train_weak_classifier
from .graphdata import Graph
from .metrics import EvalReport, evaluate_predictions


@dataclass
class TrainResult:
    model: EnsembleModel
    stage_losses: list = field(default_factory=list)    # one loss curve per stage
    epoch_ms: list = field(default_factory=list)        # flat, stage-major
    weight_history: list = field(default_factory=list)  # distributions after each stage


def resolve_cost_matrix(g: Graph, scheme, explicit: Optional[CostMatrix] = None
                        ) -> CostMatrix:
    if explicit is not None:
        if explicit.num_classes != g.num_classes:
            raise ContractError(
                f"cost matrix is {explicit.num_classes}x{explicit.num_classes} "
                f"for a {g.num_classes}-class graph")
        return explicit
    # counts over the whole labeled graph; stratified splits keep the
    # training distribution identical anyway
    return build_cost_matrix(g.class_counts(), scheme)


def train_ensemble(g: Graph, cfg: GatConfig, num_stages: int, cost_scheme: str = "log1p",
                   seed: int = 0, chain_mode: str = "attention",
                   explicit_costs: Optional[CostMatrix] = None,
                   label_coding: str = "recoded") -> TrainResult:
    """Run the full boosting loop.

    Stage l trains a fresh weak classifier on the current input features and
    sample weights, then the cost learner scores it, prices the mistakes,
    and reweights the training nodes for stage l+1. Deterministic for a
    fixed seed.
    """
    if num_stages < 1:
        raise ContractError(f"number of boosting stages must be >= 1: {num_stages}")
    if not g.train_mask.any():
        raise ContractError("graph has no training nodes")
    train_ids = np.flatnonzero(g.train_mask)
    cost_matrix = resolve_cost_matrix(g, cost_scheme, explicit_costs)

    weights = np.zeros(g.num_nodes)
    weights[train_ids] = 1.0 / train_ids.size
    features = g.features
    result = TrainResult(model=None)  # type: ignore[arg-type]
    stages: list[WeakClassifierState] = []
    seed_seq = np.random.SeedSequence(seed)
    stage_seeds = seed_seq.generate_state(num_stages)
    for stage_idx in range(num_stages):
        state, stats = train_weak_classifier(
            g, features, weights, cfg, seed=int(stage_seeds[stage_idx]),
            chain_mode=chain_mode)
        train_probs = state.probs[train_ids]
        train_scores = state.scores[train_ids]
        costs = misclassification_cost(train_scores, g.labels[train_ids], cost_matrix)
        new_train_weights, z = update_weights(
            weights[train_ids], train_probs, g.labels[train_ids], costs,
            g.num_classes, label_coding=label_coding, clamp=cfg.log_clamp)
        state.weight_norm = z
        weights = np.zeros(g.num_nodes)
        weights[train_ids] = new_train_weights
        stages.append(state)
        features = stats.chain_output
        result.stage_losses.append(stats.losses)
        result.epoch_ms.extend(stats.epoch_ms)
        result.weight_history.append(new_train_weights.copy())

    result.model = EnsembleModel(
        stages=stages, cost_matrix=cost_matrix, config=cfg, chain_mode=chain_mode,
        final_weights=weights[train_ids].copy(), train_ids=train_ids,
        train_labels=g.labels[train_ids].copy(), feature_dim=g.feature_dim)
    return result


def predict(model: EnsembleModel, g: Graph, *, reuse_stored: bool = True
            ) -> tuple[np.ndarray, np.ndarray]:
    """(predicted labels, aggregate scores) for every node of ``g``.

    With ``reuse_stored`` the per-stage outputs frozen at training time are
    summed directly (valid only on the training graph); otherwise each stage
    is re-run from its parameters on the given graph.
    """
    if reuse_stored and model.stages[0].probs.shape[0] == g.num_nodes:
        return model.decide()
    if model.feature_dim is not None and g.feature_dim != model.feature_dim:
        raise ContractError(
            f"graph has {g.feature_dim} features, model expects {model.feature_dim}")
    if model.num_classes != g.num_classes:
        raise ContractError(
            f"graph has {g.num_classes} classes, model expects {model.num_classes}")
    features = g.features
    aggregate = np.zeros((g.num_nodes, model.num_classes))
    for state in model.stages:
        probs, scores, features = stage_inference(state, g, features, model.config)
        aggregate += scores
    return np.argmax(aggregate, axis=1), aggregate


def evaluate_model(model: EnsembleModel, g: Graph, mask: str = "test",
                   wall_time_per_epoch_ms: Optional[list] = None,
                   reuse_stored: bool = True) -> EvalReport:
    """Evaluate the ensemble on one of the graph's masks."""
    masks = {"train": g.train_mask, "val": g.val_mask, "test": g.test_mask}
    if mask not in masks:
        raise ContractError(f"unknown mask {mask!r}; expected one of {sorted(masks)}")
    selected = masks[mask]
    if not selected.any():
        raise ContractError(f"mask {mask!r} selects no nodes")
    predicted, aggregate = predict(model, g, reuse_stored=reuse_stored)
    ids = np.flatnonzero(selected & (g.labels >= 0))
    # softmax-normalize the aggregate scores per row for comparability
    shifted = aggregate[ids] - aggregate[ids].max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    normalized = expd / expd.sum(axis=1, keepdims=True)
    return evaluate_predictions(predicted[ids], normalized, g.labels[ids],
                                g.num_classes,
                                wall_time_per_epoch_ms=wall_time_per_epoch_ms)
