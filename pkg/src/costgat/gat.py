"""Graph-attention weak classifier.

One weak classifier = a small GAT (attention + neighborhood aggregation,
optionally multi-head and multi-layer) with two heads on top: a linear
classifier on the final embeddings, and a mixed-linear probability head fed
by attention-mixed input features. The learned attention coefficients are
exported as a row-stochastic sparse matrix so the next boosting stage can
consume attention-mixed features instead of embeddings.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .boosting import samme_r_scores
from .errors import ContractError, DimensionError, TrainingError
from .graphdata import Graph
from .optim import Adam


@dataclass
class GatConfig:
    """Hyperparameters of one weak classifier (shared across boosting stages)."""

    hid: int = 64                       # embedding width per attention head
    heads: int = 1
    gat_layers: int = 1                 # attention layers inside one classifier
    dropout: float = 0.0                # feature dropout rate
    adj_dropout: float = 0.0            # dropout on attention coefficients
    leaky_slope: float = 0.2
    attention_loss_weight: float = 1.0  # scalar on the embedding-head loss
    mlp_loss_weight: float = 1.0        # scalar on the probability-head loss
    weight_decay: float = 0.0           # L2 strength, applied inside Adam
    attention_weight: float = 1.0       # scales the attention matrix in the feature update
    feature_weight: float = 1.0         # scales the features in the feature update
    epochs: int = 100
    learning_rate: float = 0.01
    log_clamp: float = ad.LOG_CLAMP

    def __post_init__(self):
        if self.hid < 1 or self.heads < 1 or self.gat_layers < 1:
            raise ContractError("hid, heads, and gat_layers must all be >= 1")
        if not (0.0 <= self.dropout < 1.0) or not (0.0 <= self.adj_dropout < 1.0):
            raise ContractError("dropout rates must lie in [0, 1)")
        if self.attention_weight <= 0 or self.feature_weight <= 0:
            raise ContractError("attention_weight and feature_weight must be positive")
        if self.epochs < 0:
            raise ContractError("epochs must be >= 0")


@dataclass(frozen=True)
class SparseAttention:
    """Attention coefficients on the graph's CSR support; rows sum to 1."""

    offsets: np.ndarray
    targets: np.ndarray
    values: np.ndarray
    num_nodes: int

    def __post_init__(self):
        if self.values.shape != self.targets.shape:
            raise DimensionError(
                f"attention values {self.values.shape} vs support {self.targets.shape}")

    def to_csr(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, self.targets, self.offsets),
                             shape=(self.num_nodes, self.num_nodes))

    def to_dense(self) -> np.ndarray:
        return self.to_csr().toarray()

    def row_sums(self) -> np.ndarray:
        sums = np.zeros(self.num_nodes)
        nonempty = np.diff(self.offsets) > 0
        if self.values.size:
            starts = self.offsets[:-1][nonempty]
            sums[nonempty] = np.add.reduceat(self.values, starts)
        return sums

    def matmul(self, dense: np.ndarray) -> np.ndarray:
        return self.to_csr() @ dense


@dataclass
class WeakClassifierState:
    """One trained boosting stage: parameters plus its frozen outputs."""

    weights: list            # [layer][head] arrays of shape (d_in, hid)
    attn_vectors: list       # [layer][head] arrays of shape (2*hid, 1)
    gat_head: np.ndarray     # (hid, K) linear head on the embeddings
    mix_weight: np.ndarray   # (d_head_in, K) mixed-linear probability head
    attention: SparseAttention
    probs: np.ndarray        # (N, K), rows sum to 1
    scores: np.ndarray       # (N, K) zero-sum additive scores
    chain_mode: str = "attention"
    weight_norm: Optional[float] = None  # pre-normalization sum of the weight update

    @property
    def num_classes(self) -> int:
        return self.probs.shape[1]


@dataclass
class TrainStats:
    losses: list = field(default_factory=list)
    epoch_ms: list = field(default_factory=list)
    chain_output: Optional[np.ndarray] = None  # input features for the next stage


def glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    s = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-s, s, size=(rows, cols))


def _edge_endpoints(g: Graph) -> tuple[np.ndarray, np.ndarray]:
    return g.edge_sources(), g.csr_targets


def _edge_attention(x: ad.Tensor, g: Graph, weight: ad.Tensor, attn: ad.Tensor,
                    leaky_slope: float) -> tuple[ad.Tensor, ad.Tensor]:
    """Differentiable attention coefficients on the CSR support.

    Returns (alpha, projected) where alpha is (E, 1) and projected is the
    (N, hid) linear transform reused by the aggregation step.
    """
    hid = weight.shape[1]
    if attn.shape != (2 * hid, 1):
        raise DimensionError(f"attention vector {attn.shape}, expected ({2 * hid}, 1)")
    projected = ad.matmul(x, weight)
    a_self = ad.slice_rows(attn, 0, hid)
    a_neigh = ad.slice_rows(attn, hid, 2 * hid)
    f_self = ad.matmul(projected, a_self)
    f_neigh = ad.matmul(projected, a_neigh)
    src, dst = _edge_endpoints(g)
    logits = ad.leaky_relu(
        ad.add(ad.gather_rows(f_self, src), ad.gather_rows(f_neigh, dst)),
        slope=leaky_slope)
    return ad.segment_softmax(logits, g.csr_offsets), projected


def attention_coefficients(g: Graph, features: np.ndarray, weight: np.ndarray,
                           attn_vector: np.ndarray, leaky_slope: float = 0.2
                           ) -> SparseAttention:
    """Attention coefficients for fixed parameters, as a sparse matrix."""
    if features.shape[1] != weight.shape[0]:
        raise DimensionError(
            f"features {features.shape} vs transform {weight.shape}")
    alpha, _ = _edge_attention(ad.constant(features), g, ad.constant(weight),
                               ad.constant(np.asarray(attn_vector).reshape(-1, 1)),
                               leaky_slope)
    return SparseAttention(offsets=g.csr_offsets, targets=g.csr_targets,
                           values=alpha.values[:, 0].copy(), num_nodes=g.num_nodes)


def _apply_dropout(t: ad.Tensor, rate: float, rng: np.random.Generator) -> ad.Tensor:
    # inverted dropout: surviving entries scaled by 1/(1-rate)
    mask = (rng.random(t.shape) >= rate) / (1.0 - rate)
    return ad.mul(t, ad.constant(mask))


def _activate(t: ad.Tensor, activation: str) -> ad.Tensor:
    if activation == "elu":
        return ad.elu(t)
    if activation == "identity":
        return t
    raise ContractError(f"unknown activation {activation!r}")


def _gat_layer(x: ad.Tensor, g: Graph, head_params: list, cfg: GatConfig,
               rng: Optional[np.random.Generator], training: bool, final: bool,
               activation: str = "elu") -> tuple[ad.Tensor, list[ad.Tensor]]:
    """One attention layer. Non-final layers concatenate activated heads;
    the final layer averages head outputs before the activation so the
    embedding width stays ``hid``. Returns (output, per-head alphas)."""
    if training and cfg.dropout > 0.0:
        x = _apply_dropout(x, cfg.dropout, rng)
    head_outs = []
    alphas = []
    for weight, attn in head_params:
        alpha, projected = _edge_attention(x, g, weight, attn, cfg.leaky_slope)
        alphas.append(alpha)
        mixing = alpha
        if training and cfg.adj_dropout > 0.0:
            mixing = _apply_dropout(alpha, cfg.adj_dropout, rng)
        aggregated = ad.spmm(mixing, g.csr_offsets, g.csr_targets, projected, g.num_nodes)
        head_outs.append(aggregated)
    if final:
        combined = head_outs[0] if len(head_outs) == 1 else ad.scale(
            ad.add_n(head_outs), 1.0 / len(head_outs))
        return _activate(combined, activation), alphas
    activated = [_activate(h, activation) for h in head_outs]
    out = activated[0] if len(activated) == 1 else ad.concat_cols(activated)
    return out, alphas


def gat_forward(g: Graph, features: np.ndarray, head_params: list, *,
                leaky_slope: float = 0.2, activation: str = "elu",
                combine: str = "concat") -> np.ndarray:
    """Single attention layer on fixed parameters.

    ``head_params`` is a list of (weight, attention_vector) pairs, one per
    head; ``combine`` is "concat" (width heads * hid) or "mean" (width hid).
    """
    cfg = GatConfig(hid=head_params[0][0].shape[1], heads=len(head_params),
                    leaky_slope=leaky_slope)
    params = [(ad.constant(w), ad.constant(np.asarray(a).reshape(-1, 1)))
              for w, a in head_params]
    out, _ = _gat_layer(ad.constant(features), g, params, cfg, rng=None,
                        training=False, final=(combine == "mean"),
                        activation=activation)
    return out.values


def average_heads(alphas: list[ad.Tensor]) -> ad.Tensor:
    if len(alphas) == 1:
        return alphas[0]
    return ad.scale(ad.add_n(alphas), 1.0 / len(alphas))


def feature_update(omega: SparseAttention, features: np.ndarray,
                   attention_weight: float, feature_weight: float) -> np.ndarray:
    """Next-stage input features: (beta * Omega) @ (gamma * X)."""
    if omega.num_nodes != features.shape[0]:
        raise ContractError(
            f"attention support over {omega.num_nodes} nodes vs {features.shape[0]} feature rows")
    return (attention_weight * feature_weight) * omega.matmul(features)


def mixed_linear_probs(features: np.ndarray, mix_weight: np.ndarray) -> np.ndarray:
    """Per-node class probabilities softmax(relu(x @ W)); rows sum to 1."""
    if features.shape[1] != mix_weight.shape[0]:
        raise DimensionError(f"features {features.shape} vs head {mix_weight.shape}")
    probs = ad.row_softmax(ad.relu(ad.matmul(ad.constant(features),
                                             ad.constant(mix_weight))))
    return probs.values


def masked_cross_entropy(probs: ad.Tensor, labels: np.ndarray, mask: np.ndarray,
                         sample_weights: Optional[np.ndarray] = None,
                         clamp: float = ad.LOG_CLAMP) -> ad.Tensor:
    """Cross entropy over masked rows; unweighted rows count with weight 1."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ContractError("cross entropy over an empty mask")
    n, k = probs.shape
    rows = np.flatnonzero(mask)
    if np.any(labels[rows] < 0) or np.any(labels[rows] >= k):
        raise ContractError("masked rows must carry labels in [0, K)")
    onehot = np.zeros((n, k))
    onehot[rows, labels[rows]] = 1.0
    weights = np.ones(n) if sample_weights is None else sample_weights
    return ad.weighted_cross_entropy(probs, onehot, weights, row_mask=mask, clamp=clamp)


def gat_loss(embeddings: ad.Tensor, gat_head: ad.Tensor, labels: np.ndarray,
             train_mask: np.ndarray, sample_weights: Optional[np.ndarray] = None,
             clamp: float = ad.LOG_CLAMP) -> ad.Tensor:
    """Cross entropy of the linear head + softmax on the final embeddings."""
    probs = ad.row_softmax(ad.matmul(embeddings, gat_head))
    return masked_cross_entropy(probs, labels, train_mask, sample_weights, clamp)


def mlp_loss(probs: ad.Tensor, labels: np.ndarray, train_mask: np.ndarray,
             sample_weights: Optional[np.ndarray] = None,
             clamp: float = ad.LOG_CLAMP) -> ad.Tensor:
    """Cross entropy of the mixed-linear probability head over masked rows."""
    return masked_cross_entropy(probs, labels, train_mask, sample_weights, clamp)


class _StageParams:
    """Trainable tensors of one weak classifier, in a fixed init order."""

    def __init__(self, rng: np.random.Generator, in_dim: int, num_classes: int,
                 cfg: GatConfig, head_in_dim: int):
        self.layers = []
        d_in = in_dim
        for layer in range(cfg.gat_layers):
            heads = []
            for _ in range(cfg.heads):
                weight = ad.parameter(glorot(rng, d_in, cfg.hid))
                attn = ad.parameter(glorot(rng, 2 * cfg.hid, 1))
                heads.append((weight, attn))
            self.layers.append(heads)
            last = layer == cfg.gat_layers - 1
            d_in = cfg.hid if last else cfg.hid * cfg.heads
        # heads start at small scale so initial class distributions are
        # near uniform; exactly zero would leave the ReLU head without a
        # gradient (subgradient 0 at 0)
        self.gat_head = ad.parameter(0.01 * glorot(rng, cfg.hid, num_classes))
        self.mix_weight = ad.parameter(0.01 * glorot(rng, head_in_dim, num_classes))

    def all_tensors(self) -> list[ad.Tensor]:
        flat = []
        for heads in self.layers:
            for weight, attn in heads:
                flat.extend([weight, attn])
        flat.extend([self.gat_head, self.mix_weight])
        return flat


def _stage_forward(params: _StageParams, g: Graph, x: ad.Tensor, cfg: GatConfig,
                   rng: Optional[np.random.Generator], training: bool,
                   chain_mode: str) -> dict:
    h = x
    final_alphas = None
    for layer_idx, heads in enumerate(params.layers):
        final = layer_idx == len(params.layers) - 1
        h, alphas = _gat_layer(h, g, heads, cfg, rng, training, final)
        if final:
            final_alphas = alphas
    alpha_bar = average_heads(final_alphas)
    if chain_mode == "attention":
        mixed = ad.spmm(alpha_bar, g.csr_offsets, g.csr_targets, x, g.num_nodes)
        head_in = ad.scale(mixed, cfg.attention_weight * cfg.feature_weight)
    elif chain_mode == "embedding":
        head_in = h  # stacked-GAT ablation: chain raw embeddings instead
    else:
        raise ContractError(f"unknown chain_mode {chain_mode!r}")
    mix_probs = ad.row_softmax(ad.relu(ad.matmul(head_in, params.mix_weight)))
    return {"embeddings": h, "alpha_bar": alpha_bar, "head_in": head_in,
            "mix_probs": mix_probs}


def train_weak_classifier(g: Graph, x_in: np.ndarray, sample_weights: np.ndarray,
                          cfg: GatConfig, seed: int = 0, chain_mode: str = "attention"
                          ) -> tuple[WeakClassifierState, TrainStats]:
    """Train one weak classifier with full-batch Adam.

    ``sample_weights`` is a length-N array, zero off the training mask and
    summing to 1 over it. The returned state carries the learned attention
    matrix, per-node class probabilities, and zero-sum boosting scores;
    ``TrainStats.chain_output`` holds the input features for the next stage.
    """
    if x_in.shape[0] != g.num_nodes:
        raise ContractError(f"{x_in.shape[0]} feature rows for {g.num_nodes} nodes")
    weights = np.asarray(sample_weights, dtype=np.float64)
    if np.any(weights < 0):
        raise ContractError("sample weights must be nonnegative")
    on_train = weights[g.train_mask]
    if abs(on_train.sum() - 1.0) > 1e-6:
        raise ContractError(f"sample weights sum to {on_train.sum():.6f} on the train mask")
    if np.any(weights[~g.train_mask] != 0.0):
        raise ContractError("sample weights must be zero outside the train mask")

    rng = np.random.default_rng(seed)
    head_in_dim = x_in.shape[1] if chain_mode == "attention" else cfg.hid
    params = _StageParams(rng, x_in.shape[1], g.num_classes, cfg, head_in_dim)
    optimizer = Adam(params.all_tensors(), learning_rate=cfg.learning_rate,
                     weight_decay=cfg.weight_decay)
    x_const = ad.constant(x_in)
    stats = TrainStats()
    for epoch in range(cfg.epochs):
        started = time.perf_counter()
        optimizer.zero_grad()
        with ad.Tape() as tape:
            out = _stage_forward(params, g, x_const, cfg, rng, training=True,
                                 chain_mode=chain_mode)
            loss_gat = gat_loss(out["embeddings"], params.gat_head, g.labels,
                                g.train_mask, weights, clamp=cfg.log_clamp)
            loss_mlp = masked_cross_entropy(out["mix_probs"], g.labels, g.train_mask,
                                            weights, clamp=cfg.log_clamp)
            loss = ad.add(ad.scale(loss_gat, cfg.attention_loss_weight),
                          ad.scale(loss_mlp, cfg.mlp_loss_weight))
        value = loss.item()
        if not np.isfinite(value):
            raise TrainingError(f"non-finite loss at epoch {epoch}")
        tape.backward(loss)
        optimizer.step()
        stats.losses.append(value)
        stats.epoch_ms.append((time.perf_counter() - started) * 1000.0)

    final = _stage_forward(params, g, x_const, cfg, rng=None, training=False,
                           chain_mode=chain_mode)
    attention = SparseAttention(offsets=g.csr_offsets, targets=g.csr_targets,
                                values=final["alpha_bar"].values[:, 0].copy(),
                                num_nodes=g.num_nodes)
    probs = final["mix_probs"].values.copy()
    state = WeakClassifierState(
        weights=[[w.values.copy() for w, _ in heads] for heads in params.layers],
        attn_vectors=[[a.values.copy() for _, a in heads] for heads in params.layers],
        gat_head=params.gat_head.values.copy(),
        mix_weight=params.mix_weight.values.copy(),
        attention=attention,
        probs=probs,
        scores=samme_r_scores(probs, clamp=cfg.log_clamp),
        chain_mode=chain_mode,
    )
    stats.chain_output = (final["head_in"].values.copy() if chain_mode == "attention"
                          else final["embeddings"].values.copy())
    return state, stats


def stage_inference(state: WeakClassifierState, g: Graph, x_in: np.ndarray,
                    cfg: GatConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Recompute (probs, scores, chain_output) from stored parameters.

    Used when evaluating a checkpoint on a graph other than the one it was
    trained on; attention is rebuilt from the given graph's structure.
    """
    params = _params_from_state(state)
    out = _stage_forward(params, g, ad.constant(x_in), cfg, rng=None,
                         training=False, chain_mode=state.chain_mode)
    probs = out["mix_probs"].values
    chain_output = (out["head_in"].values if state.chain_mode == "attention"
                    else out["embeddings"].values)
    return probs, samme_r_scores(probs, clamp=cfg.log_clamp), chain_output


def _params_from_state(state: WeakClassifierState) -> _StageParams:
    params = _StageParams.__new__(_StageParams)
    params.layers = [
        [(ad.constant(w), ad.constant(a)) for w, a in zip(layer_w, layer_a)]
        for layer_w, layer_a in zip(state.weights, state.attn_vectors)]
    params.gat_head = ad.constant(state.gat_head)
    params.mix_weight = ad.constant(state.mix_weight)
    return params
