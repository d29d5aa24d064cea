"""Graph data model: CSR-structured undirected graphs with features, labels,
and train/val/test masks, plus ingestion, stratified splitting, and
imbalance-ratio tooling.

Node labels are integers in [0, K); -1 marks unlabeled nodes, which never
appear in any mask. Self-loops are added at construction by default so that
neighborhood aggregation always includes a node's own features.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ContractError, IngestionError


@dataclass(frozen=True)
class Graph:
    num_nodes: int
    csr_offsets: np.ndarray   # int64, length num_nodes + 1
    csr_targets: np.ndarray   # int64, one entry per directed edge
    features: np.ndarray      # float64, num_nodes x feature_dim
    labels: np.ndarray        # int64, -1 for unlabeled
    num_classes: int
    train_mask: np.ndarray = field(default=None)  # type: ignore[assignment]
    val_mask: np.ndarray = field(default=None)    # type: ignore[assignment]
    test_mask: np.ndarray = field(default=None)   # type: ignore[assignment]
    has_self_loops: bool = True

    def __post_init__(self):
        n = self.num_nodes
        for name in ("train_mask", "val_mask", "test_mask"):
            if getattr(self, name) is None:
                object.__setattr__(self, name, np.zeros(n, dtype=bool))
        for arr in (self.csr_offsets, self.csr_targets, self.features, self.labels,
                    self.train_mask, self.val_mask, self.test_mask):
            arr.setflags(write=False)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_directed_edges(self) -> int:
        return int(self.csr_targets.size)

    def degrees(self) -> np.ndarray:
        return np.diff(self.csr_offsets)

    def neighbors(self, node: int) -> np.ndarray:
        return self.csr_targets[self.csr_offsets[node]:self.csr_offsets[node + 1]]

    def edge_sources(self) -> np.ndarray:
        """Source node of each directed CSR entry."""
        return np.repeat(np.arange(self.num_nodes), self.degrees())

    def labeled_mask(self) -> np.ndarray:
        return self.labels >= 0

    def class_counts(self) -> np.ndarray:
        """Labeled-node count per class; raises if any class is empty."""
        labeled = self.labels[self.labels >= 0]
        counts = np.bincount(labeled, minlength=self.num_classes)
        if np.any(counts == 0):
            empty = np.flatnonzero(counts == 0).tolist()
            raise ContractError(f"classes with no labeled node: {empty}")
        return counts


def build_graph(num_nodes: int, edges: np.ndarray, features: np.ndarray,
                labels: np.ndarray, num_classes: int | None = None,
                add_self_loops: bool = True) -> Graph:
    """Assemble a Graph from an undirected edge list.

    Edges are symmetrized and deduplicated; self-loops present in the input
    are kept single. ``num_classes`` defaults to max label + 1.
    """
    features = np.ascontiguousarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.shape[0] != num_nodes or labels.shape[0] != num_nodes:
        raise ContractError(
            f"features/labels rows ({features.shape[0]}/{labels.shape[0]}) "
            f"vs num_nodes {num_nodes}")
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= num_nodes):
        raise ContractError("edge endpoint outside node range")
    both = np.concatenate([edges, edges[:, ::-1]], axis=0)
    if add_self_loops:
        loops = np.arange(num_nodes, dtype=np.int64)
        both = np.concatenate([both, np.stack([loops, loops], axis=1)], axis=0)
    # unique directed pairs; covers duplicate rows and pre-symmetrized input
    keys = both[:, 0] * num_nodes + both[:, 1]
    order = np.argsort(keys, kind="stable")
    keys = keys[order]
    keep = np.ones(keys.size, dtype=bool)
    keep[1:] = keys[1:] != keys[:-1]
    uniq = keys[keep]
    sources = (uniq // num_nodes).astype(np.int64)
    targets = (uniq % num_nodes).astype(np.int64)
    offsets = np.zeros(num_nodes + 1, dtype=np.int64)
    np.add.at(offsets, sources + 1, 1)
    offsets = np.cumsum(offsets)
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if np.any(labels >= 0) else 0
    else:
        inferred = int(labels.max()) + 1 if np.any(labels >= 0) else 0
        if inferred > num_classes:
            raise ContractError(
                f"labels imply at least {inferred} classes, config says {num_classes}")
    if np.any(labels >= num_classes):
        raise ContractError("label outside [0, num_classes)")
    return Graph(num_nodes=num_nodes, csr_offsets=offsets, csr_targets=targets,
                 features=features, labels=labels, num_classes=num_classes,
                 has_self_loops=add_self_loops)


def standardize_features(features: np.ndarray) -> np.ndarray:
    """Per-column standardization; constant columns become zero."""
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return (features - mean) / std


def load_graph(nodes_path, edges_path, *, add_self_loops: bool = True,
               normalize_features: bool = True, num_classes: int | None = None,
               splits_path=None) -> Graph:
    """Load a graph from nodes.csv / edges.csv (schema in the README).

    nodes.csv: header ``id,label,f0,...``; ids must be the contiguous range
    0..N-1. edges.csv: header ``src,dst``; duplicate and reversed rows are
    tolerated. ``splits_path`` optionally assigns masks from a JSON document
    with ``train``/``val``/``test`` id arrays.
    """
    ids, labels, rows = [], [], []
    try:
        nodes_fh = open(nodes_path, newline="")
    except OSError as exc:
        raise IngestionError(str(exc)) from None
    with nodes_fh as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "id" or header[1] != "label":
            raise IngestionError(f"{nodes_path}: expected header id,label,f0,...")
        width = len(header) - 2
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width + 2:
                raise IngestionError(f"{nodes_path}:{lineno}: expected {width + 2} fields")
            try:
                ids.append(int(row[0]))
                labels.append(int(row[1]))
                rows.append([float(x) for x in row[2:]])
            except ValueError as exc:
                raise IngestionError(f"{nodes_path}:{lineno}: {exc}") from None
    n = len(ids)
    id_arr = np.asarray(ids, dtype=np.int64)
    seen = np.zeros(n, dtype=bool)
    for lineno_offset, node_id in enumerate(id_arr):
        if node_id < 0 or node_id >= n or seen[node_id]:
            raise IngestionError(
                f"{nodes_path}:{lineno_offset + 2}: duplicate or non-contiguous id {node_id}")
        seen[node_id] = True
    features = np.zeros((n, width), dtype=np.float64)
    label_arr = np.zeros(n, dtype=np.int64)
    features[id_arr] = np.asarray(rows, dtype=np.float64)
    label_arr[id_arr] = np.asarray(labels, dtype=np.int64)

    edge_rows = []
    try:
        edges_fh = open(edges_path, newline="")
    except OSError as exc:
        raise IngestionError(str(exc)) from None
    with edges_fh as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["src", "dst"]:
            raise IngestionError(f"{edges_path}: expected header src,dst")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                src, dst = int(row[0]), int(row[1])
            except ValueError as exc:
                raise IngestionError(f"{edges_path}:{lineno}: {exc}") from None
            if not (0 <= src < n) or not (0 <= dst < n):
                raise IngestionError(f"{edges_path}:{lineno}: dangling endpoint ({src},{dst})")
            edge_rows.append((src, dst))
    edges = np.asarray(edge_rows, dtype=np.int64).reshape(-1, 2)
    if normalize_features:
        features = standardize_features(features)
    g = build_graph(n, edges, features, label_arr, num_classes=num_classes,
                    add_self_loops=add_self_loops)
    if splits_path is not None:
        g = apply_split_file(g, splits_path)
    return g


def apply_split_file(g: Graph, splits_path) -> Graph:
    with open(splits_path) as fh:
        doc = json.load(fh)
    masks = {}
    for name in ("train", "val", "test"):
        mask = np.zeros(g.num_nodes, dtype=bool)
        ids = np.asarray(doc.get(name, []), dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= g.num_nodes):
            raise IngestionError(f"{splits_path}: {name} split references unknown node ids")
        mask[ids] = True
        masks[name] = mask
    overlap = (masks["train"] & masks["val"]) | (masks["train"] & masks["test"]) \
        | (masks["val"] & masks["test"])
    if overlap.any():
        raise IngestionError(f"{splits_path}: splits overlap at {np.flatnonzero(overlap)[:8]}")
    return replace(g, train_mask=masks["train"], val_mask=masks["val"],
                   test_mask=masks["test"])


# ---------------------------------------------------------------------------
# imbalance tooling
# ---------------------------------------------------------------------------

def imbalance_ratio(g: Graph) -> float:
    """min class size / max class size over labeled nodes, in (0, 1]."""
    counts = g.class_counts()
    return float(counts.min()) / float(counts.max())


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.2
    val_fraction: float = 0.2
    test_fraction: float = 0.6
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        fracs = (self.train_fraction, self.val_fraction, self.test_fraction)
        if any(f <= 0 for f in fracs):
            raise ContractError(f"split fractions must be positive: {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ContractError(f"split fractions must sum to 1: {fracs}")


def stratified_split(g: Graph, spec: SplitSpec) -> Graph:
    """Populate masks so each split mirrors the global class distribution.

    Per-class counts land within one node of the exact fractions. Unlabeled
    nodes stay outside every mask. Deterministic for a fixed seed.
    """
    rng = np.random.default_rng(spec.seed)
    train = np.zeros(g.num_nodes, dtype=bool)
    val = np.zeros(g.num_nodes, dtype=bool)
    test = np.zeros(g.num_nodes, dtype=bool)
    if spec.stratified:
        groups = [np.flatnonzero(g.labels == k) for k in range(g.num_classes)]
    else:
        groups = [np.flatnonzero(g.labels >= 0)]
    for ids in groups:
        if ids.size == 0:
            continue
        ids = rng.permutation(ids)
        n = ids.size
        n_train = int(round(spec.train_fraction * n))
        n_val = int(round(spec.val_fraction * n))
        if n >= 3 and (n_train == 0 or n_val == 0 or n_train + n_val >= n):
            n_train = max(n_train, 1)
            n_val = max(n_val, 1)
            n_train = min(n_train, n - 2)
            n_val = min(n_val, n - n_train - 1)
        if n < 3:
            warnings.warn(f"class group of size {n} too small to appear in all splits")
            n_train = min(n_train, n)
            n_val = min(n_val, n - n_train)
        train[ids[:n_train]] = True
        val[ids[n_train:n_train + n_val]] = True
        test[ids[n_train + n_val:]] = True
    return replace(g, train_mask=train, val_mask=val, test_mask=test)


def subsample_to_ir(g: Graph, target_ir: float, seed: int = 0) -> Graph:
    """Downsample majority classes until the imbalance ratio reaches target.

    Minority-class nodes are never removed, so only targets at or above the
    current ratio are reachable. The returned graph is the induced subgraph
    on the retained nodes (unlabeled nodes are all kept).
    """
    if not (0.0 < target_ir <= 1.0):
        raise ContractError(f"target imbalance ratio must be in (0, 1]: {target_ir}")
    counts = g.class_counts()
    current = float(counts.min()) / float(counts.max())
    if target_ir < current - 1e-12:
        raise ContractError(
            f"target {target_ir} below current ratio {current:.6f}; "
            "reaching it would require removing minority nodes")
    cap = int(round(counts.min() / target_ir))
    rng = np.random.default_rng(seed)
    keep = g.labels < 0  # unlabeled nodes always survive
    for k in range(g.num_classes):
        ids = np.flatnonzero(g.labels == k)
        if ids.size > cap:
            ids = rng.permutation(ids)[:cap]
        keep[ids] = True
    return induced_subgraph(g, np.flatnonzero(keep))


def induced_subgraph(g: Graph, node_ids: np.ndarray) -> Graph:
    """Subgraph on ``node_ids`` preserving edges among retained nodes."""
    node_ids = np.sort(np.asarray(node_ids, dtype=np.int64))
    remap = -np.ones(g.num_nodes, dtype=np.int64)
    remap[node_ids] = np.arange(node_ids.size)
    sources = g.edge_sources()
    ok = (remap[sources] >= 0) & (remap[g.csr_targets] >= 0)
    edges = np.stack([remap[sources[ok]], remap[g.csr_targets[ok]]], axis=1)
    sub = build_graph(node_ids.size, edges, g.features[node_ids].copy(),
                      g.labels[node_ids].copy(), num_classes=g.num_classes,
                      add_self_loops=g.has_self_loops)
    return replace(sub, train_mask=g.train_mask[node_ids].copy(),
                   val_mask=g.val_mask[node_ids].copy(),
                   test_mask=g.test_mask[node_ids].copy())
