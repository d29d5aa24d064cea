"""Block-model generator for synthetic imbalanced graphs.

Nodes belong to blocks (= classes); edges are Bernoulli with separate
intra-/inter-block probabilities; features are class means spaced along the
first axis plus isotropic Gaussian noise. Used by property tests and the
imbalance-ratio sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .graphdata import Graph, build_graph


@dataclass(frozen=True)
class SyntheticSpec:
    nodes_per_class: tuple[int, ...]
    intra_class_edge_prob: float = 0.05
    inter_class_edge_prob: float = 0.005
    feature_dim: int = 8
    class_mean_separation: float = 2.0
    feature_noise_std: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "nodes_per_class", tuple(int(n) for n in self.nodes_per_class))
        if not self.nodes_per_class or any(n < 1 for n in self.nodes_per_class):
            raise ContractError(f"nodes_per_class must all be >= 1: {self.nodes_per_class}")
        for name in ("intra_class_edge_prob", "inter_class_edge_prob"):
            p = getattr(self, name)
            if not (0.0 <= p <= 1.0):
                raise ContractError(f"{name} must be in [0, 1]: {p}")
        if self.feature_dim < 1:
            raise ContractError(f"feature_dim must be >= 1: {self.feature_dim}")
        if self.feature_noise_std < 0:
            raise ContractError(f"feature_noise_std must be >= 0: {self.feature_noise_std}")


def class_means(spec: SyntheticSpec) -> np.ndarray:
    """Per-class feature means, spaced class_mean_separation apart on axis 0.

    The grid is centered on the origin so no class mean sits exactly at zero
    (the probability heads are bias-free linear maps).
    """
    k = len(spec.nodes_per_class)
    means = np.zeros((k, spec.feature_dim))
    means[:, 0] = (np.arange(k) - (k - 1) / 2.0) * spec.class_mean_separation
    return means


def generate_synthetic(spec: SyntheticSpec, *, add_self_loops: bool = True) -> Graph:
    """Sample a block-model graph; labels are the block ids, masks are empty."""
    rng = np.random.default_rng(spec.seed)
    counts = np.asarray(spec.nodes_per_class, dtype=np.int64)
    n = int(counts.sum())
    labels = np.repeat(np.arange(counts.size), counts)
    starts = np.concatenate([[0], np.cumsum(counts)])

    edge_chunks = []
    for a in range(counts.size):
        for b in range(a, counts.size):
            prob = spec.intra_class_edge_prob if a == b else spec.inter_class_edge_prob
            if prob <= 0.0:
                continue
            rows = counts[a]
            cols = counts[b]
            draw = rng.random((rows, cols)) < prob
            if a == b:
                draw = np.triu(draw, k=1)  # self-loops handled by build_graph
            src, dst = np.nonzero(draw)
            if src.size:
                edge_chunks.append(np.stack([src + starts[a], dst + starts[b]], axis=1))
    edges = (np.concatenate(edge_chunks, axis=0) if edge_chunks
             else np.zeros((0, 2), dtype=np.int64))

    means = class_means(spec)
    features = means[labels] + spec.feature_noise_std * rng.standard_normal(
        (n, spec.feature_dim))
    return build_graph(n, edges, features, labels, num_classes=counts.size,
                       add_self_loops=add_self_loops)
