"""Boosting-based cost-sensitive learner.

Cost matrices, the SAMME.R log-probability transform, cost-weighted sample
reweighting between stages, the ensemble decision, and a diagnostic that
checks the trained ensemble against its cumulative-cost upper bound.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from .errors import ContractError, DegenerateDistributionError

if TYPE_CHECKING:  # pragma: no cover
    from .gat import GatConfig, WeakClassifierState

LOG_CLAMP = 1e-12

COST_SCHEMES = ("uniform", "inverse", "log1p", "explicit")


@dataclass(frozen=True)
class CostMatrix:
    """K x K misclassification costs; entry (i, j) prices truth i predicted j."""

    matrix: np.ndarray
    scheme: str

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=np.float64)
        object.__setattr__(self, "matrix", mat)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ContractError(f"cost matrix must be square, got {mat.shape}")
        if self.scheme not in COST_SCHEMES:
            raise ContractError(f"unknown cost scheme {self.scheme!r}")
        if not np.all(np.isfinite(mat)) or np.any(mat < 0):
            raise ContractError("cost entries must be finite and nonnegative")
        if self.scheme == "explicit":
            _check_row_dominance(mat)
        mat.setflags(write=False)

    @property
    def num_classes(self) -> int:
        return self.matrix.shape[0]

    def to_json_dict(self) -> dict:
        return {"scheme": self.scheme, "matrix": self.matrix.tolist()}


def _check_row_dominance(mat: np.ndarray) -> None:
    # no row may strictly dominate another in every column, else the
    # minimum-expected-cost decision degenerates to a constant class
    k = mat.shape[0]
    for m in range(k):
        for n in range(k):
            if m != n and np.all(mat[m] > mat[n]):
                raise ContractError(
                    f"cost row {m} strictly dominates row {n}; such a matrix "
                    "forces a constant prediction")


def build_cost_matrix(class_counts: Sequence[int], scheme: str) -> CostMatrix:
    """Cost matrix from labeled class counts.

    uniform: every entry 1. inverse: C_ij = count_j / count_i. log1p:
    C_ij = log(count_j / count_i + 1). Formulas apply on the diagonal too.
    """
    counts = np.asarray(class_counts, dtype=np.float64)
    if counts.ndim != 1 or counts.size < 2:
        raise ContractError(f"need counts for >= 2 classes, got {counts.shape}")
    if np.any(counts < 1):
        raise ContractError(f"class counts must all be >= 1: {counts.tolist()}")
    if scheme == "uniform":
        mat = np.ones((counts.size, counts.size))
    elif scheme == "inverse":
        mat = counts[None, :] / counts[:, None]
    elif scheme == "log1p":
        mat = np.log1p(counts[None, :] / counts[:, None])
    else:
        raise ContractError(f"unknown cost scheme {scheme!r}")
    return CostMatrix(matrix=mat, scheme=scheme)


def load_cost_matrix(source) -> CostMatrix:
    """Explicit cost matrix from a JSON file path or parsed document."""
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source) as fh:
            doc = json.load(fh)
    else:
        doc = source
    scheme = doc.get("scheme")
    if scheme != "explicit":
        raise ContractError(f"cost matrix documents must declare scheme 'explicit', got {scheme!r}")
    return CostMatrix(matrix=np.asarray(doc["matrix"], dtype=np.float64), scheme="explicit")


# ---------------------------------------------------------------------------
# SAMME.R machinery
# ---------------------------------------------------------------------------

def samme_r_scores(probs: np.ndarray, clamp: float = LOG_CLAMP) -> np.ndarray:
    """Zero-sum additive scores (K-1) * (log p_k - mean_k' log p_k')."""
    probs = np.asarray(probs, dtype=np.float64)
    k = probs.shape[1]
    logs = np.log(np.maximum(probs, clamp))
    return (k - 1) * (logs - logs.mean(axis=1, keepdims=True))


def recode_labels(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """Label coding used by the weight update: 1 at the true class,
    -1/(K-1) elsewhere."""
    labels = np.asarray(labels, dtype=np.int64)
    coded = np.full((labels.size, num_classes), -1.0 / (num_classes - 1))
    coded[np.arange(labels.size), labels] = 1.0
    return coded


def misclassification_cost(scores: np.ndarray, labels: np.ndarray,
                           cost_matrix: CostMatrix) -> np.ndarray:
    """Per-node cost C[y_v, argmax_k score]; argmax ties go to the lowest class."""
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    if np.any(labels < 0) or np.any(labels >= cost_matrix.num_classes):
        raise ContractError("label outside the cost matrix range")
    predicted = np.argmax(scores, axis=1)
    return cost_matrix.matrix[labels, predicted]


def update_weights(weights: np.ndarray, probs: np.ndarray, labels: np.ndarray,
                   costs: np.ndarray, num_classes: int, *,
                   label_coding: str = "recoded", clamp: float = LOG_CLAMP
                   ) -> tuple[np.ndarray, float]:
    """Cost-weighted multiplicative weight update, then renormalization.

    w_v <- w_v * exp(-((K-1)/K) * C_v * y~_v . log p(v)) with the recoded
    label vector by default ("onehot" keeps only the true-class log term).
    Returns (normalized weights, pre-normalization sum Z).
    """
    weights = np.asarray(weights, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    costs = np.asarray(costs, dtype=np.float64)
    logs = np.log(np.maximum(probs, clamp))
    if label_coding == "recoded":
        coded = recode_labels(labels, num_classes)
        inner = (coded * logs).sum(axis=1)
    elif label_coding == "onehot":
        inner = logs[np.arange(labels.size), labels]
    else:
        raise ContractError(f"unknown label coding {label_coding!r}")
    exponent = -((num_classes - 1) / num_classes) * costs * inner
    updated = weights * np.exp(exponent)
    z = float(updated.sum())
    if not np.isfinite(z) or z <= 0.0:
        raise DegenerateDistributionError(
            f"weight update produced a degenerate distribution (sum {z})")
    return updated / z, z


def ensemble_decision(states: Sequence["WeakClassifierState"]
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Sum stage scores and take the per-node argmax (ties: lowest class).

    Returns (predicted labels, aggregate scores); the aggregate is the
    decision statistic used for ranking metrics.
    """
    if not states:
        raise ContractError("ensemble needs at least one trained stage")
    aggregate = np.zeros_like(states[0].scores)
    for state in states:
        if state.scores.shape != aggregate.shape:
            raise ContractError(
                f"stage score shape {state.scores.shape} vs {aggregate.shape}")
        aggregate = aggregate + state.scores
    return np.argmax(aggregate, axis=1), aggregate


@dataclass
class EnsembleModel:
    """Ordered trained stages plus everything needed to audit them."""

    stages: list
    cost_matrix: CostMatrix
    config: "GatConfig"
    chain_mode: str = "attention"
    final_weights: Optional[np.ndarray] = None  # distribution after the last stage
    train_ids: Optional[np.ndarray] = None
    train_labels: Optional[np.ndarray] = None
    feature_dim: Optional[int] = None

    @property
    def num_stages(self) -> int:
        return len(self.stages)

    @property
    def num_classes(self) -> int:
        return self.stages[0].num_classes

    def decide(self) -> tuple[np.ndarray, np.ndarray]:
        return ensemble_decision(self.stages)


@dataclass
class BoundReport:
    """Outcome of the cumulative-cost bound check on the training nodes."""

    lhs: float                # realized cumulative misclassification cost
    rhs: float                # n * K^L * d * prod(Z_l)
    holds: bool
    num_train: int
    num_excluded: int         # zero-cost nodes excluded when L >= 2
    d_value: float
    z_product: float
    slack_ratio: float        # rhs / lhs, inf when lhs == 0

    def to_json_dict(self) -> dict:
        return {
            "lhs": self.lhs, "rhs": self.rhs, "holds": self.holds,
            "num_train": self.num_train, "num_excluded": self.num_excluded,
            "d_value": self.d_value, "z_product": self.z_product,
            "slack_ratio": self.slack_ratio,
        }


def verify_bound(model: EnsembleModel) -> BoundReport:
    """Check realized training cost against its theoretical upper bound.

    The per-node cost is the one realized at the final stage. Nodes with
    zero cost are excluded (with a count) when the number of stages makes
    their contribution to d undefined.
    """
    if model.train_ids is None or model.train_labels is None:
        raise ContractError("model carries no training node record")
    if model.final_weights is None:
        raise ContractError("model carries no final weight distribution")
    train_ids = model.train_ids
    labels = model.train_labels
    num_stages = model.num_stages
    k = model.num_classes
    predicted, _ = ensemble_decision(model.stages)
    predicted = predicted[train_ids]
    final_scores = model.stages[-1].scores[train_ids]
    costs = misclassification_cost(final_scores, labels, model.cost_matrix)

    included = np.ones(train_ids.size, dtype=bool)
    if num_stages >= 2:
        included = costs > 0.0
    excluded = int((~included).sum())
    if excluded:
        warnings.warn(f"{excluded} zero-cost nodes not verifiable for the bound")

    lhs = float((costs[included] * (predicted[included] != labels[included])).sum())
    weights = model.final_weights
    with np.errstate(divide="ignore"):
        denom = np.power(costs[included], num_stages - 1)
    d_value = float((weights[included] / denom).sum())
    z_values = [s.weight_norm for s in model.stages]
    if any(z is None for z in z_values):
        raise ContractError("a stage is missing its weight normalization factor")
    z_product = float(np.prod(z_values))
    n = int(included.sum())
    rhs = n * (k ** num_stages) * d_value * z_product
    slack = float("inf") if lhs == 0.0 else rhs / lhs
    return BoundReport(lhs=lhs, rhs=rhs, holds=bool(lhs <= rhs), num_train=n,
                       num_excluded=excluded, d_value=d_value,
                       z_product=z_product, slack_ratio=slack)
