"""Run configuration: a single JSON document drives training, evaluation,
and the experiment commands.

Top-level keys: ``dataset`` (paths) or ``synthetic`` (generator spec),
``split``, ``model``, ``cost_scheme``, ``chain_mode``, ``stages``, ``seed``,
``out_dir``. Model keys follow the hyperparameter names used throughout the
experiment tables (hid_embedding_size, learning_rate, dropout, adj_dropout,
model_layers, attention_loss_weight, attention_weight, feature_weight, ...).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .boosting import COST_SCHEMES, CostMatrix, load_cost_matrix
from .errors import ConfigError, ContractError
from .gat import GatConfig
from .graphdata import Graph, SplitSpec, load_graph, stratified_split
from .synthetic import SyntheticSpec, generate_synthetic

_MODEL_KEYS = {
    "hid_embedding_size": "hid",
    "heads": "heads",
    "gat_layers": "gat_layers",
    "dropout": "dropout",
    "adj_dropout": "adj_dropout",
    "leaky_slope": "leaky_slope",
    "attention_loss_weight": "attention_loss_weight",
    "mlp_loss_weight": "mlp_loss_weight",
    "weight_decay": "weight_decay",
    "attention_weight": "attention_weight",
    "feature_weight": "feature_weight",
    "epochs": "epochs",
    "learning_rate": "learning_rate",
    "log_clamp": "log_clamp",
}

_SPLIT_KEYS = {"train_fraction", "val_fraction", "test_fraction", "seed", "stratified"}

_SYNTHETIC_KEYS = {"nodes_per_class", "intra_class_edge_prob", "inter_class_edge_prob",
                   "feature_dim", "class_mean_separation", "feature_noise_std", "seed"}

_DATASET_KEYS = {"nodes", "edges", "splits", "normalize_features", "self_loops",
                 "num_classes"}

_TOP_KEYS = {"dataset", "synthetic", "split", "model", "cost_scheme", "chain_mode",
             "stages", "seed", "out_dir", "label_coding"}


@dataclass
class RunConfig:
    gat: GatConfig
    split: SplitSpec
    stages: int = 2                      # "model layers": number of boosting stages
    cost_scheme: str = "log1p"
    explicit_costs: Optional[CostMatrix] = None
    chain_mode: str = "attention"
    label_coding: str = "recoded"
    seed: int = 0
    out_dir: str = "runs"
    dataset: Optional[dict] = None
    synthetic: Optional[SyntheticSpec] = None
    raw: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.stages < 1:
            raise ConfigError(f"stages must be >= 1: {self.stages}")
        if self.chain_mode not in ("attention", "embedding"):
            raise ConfigError(f"unknown chain_mode {self.chain_mode!r}")
        if self.cost_scheme not in COST_SCHEMES:
            raise ConfigError(f"unknown cost_scheme {self.cost_scheme!r}")
        if self.dataset is None and self.synthetic is None:
            raise ConfigError("config needs either a 'dataset' or a 'synthetic' section")


def _reject_unknown(section: dict, allowed, where: str) -> None:
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {unknown}")


def parse_run_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    _reject_unknown(doc, _TOP_KEYS, "config")
    model_doc = doc.get("model", {})
    _reject_unknown(model_doc, _MODEL_KEYS, "model")
    try:
        gat = GatConfig(**{_MODEL_KEYS[k]: v for k, v in model_doc.items()})
    except (ContractError, TypeError) as exc:
        raise ConfigError(f"bad model section: {exc}") from None

    split_doc = doc.get("split", {})
    _reject_unknown(split_doc, _SPLIT_KEYS, "split")
    try:
        split = SplitSpec(**split_doc)
    except ContractError as exc:
        raise ConfigError(f"bad split section: {exc}") from None

    synthetic = None
    if "synthetic" in doc:
        _reject_unknown(doc["synthetic"], _SYNTHETIC_KEYS, "synthetic")
        try:
            synthetic = SyntheticSpec(**doc["synthetic"])
        except ContractError as exc:
            raise ConfigError(f"bad synthetic section: {exc}") from None

    dataset = doc.get("dataset")
    if dataset is not None:
        _reject_unknown(dataset, _DATASET_KEYS, "dataset")
        for key in ("nodes", "edges"):
            if key not in dataset:
                raise ConfigError(f"dataset section is missing {key!r}")

    cost_scheme = doc.get("cost_scheme", "log1p")
    explicit = None
    if isinstance(cost_scheme, dict):
        try:
            explicit = load_cost_matrix(cost_scheme)
        except ContractError as exc:
            raise ConfigError(f"bad explicit cost matrix: {exc}") from None
        cost_scheme = "explicit"

    try:
        return RunConfig(gat=gat, split=split,
                         stages=int(doc.get("stages", 2)),
                         cost_scheme=cost_scheme, explicit_costs=explicit,
                         chain_mode=doc.get("chain_mode", "attention"),
                         label_coding=doc.get("label_coding", "recoded"),
                         seed=int(doc.get("seed", 0)),
                         out_dir=doc.get("out_dir", "runs"),
                         dataset=dataset, synthetic=synthetic, raw=doc)
    except ContractError as exc:
        raise ConfigError(str(exc)) from None


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None
    return parse_run_config(doc)


def build_run_graph(cfg: RunConfig, *, base_dir: Path = Path(".")) -> Graph:
    """Materialize the configured graph and populate its masks."""
    if cfg.dataset is not None:
        ds = cfg.dataset
        nodes = Path(ds["nodes"])
        edges = Path(ds["edges"])
        if not nodes.is_absolute():
            nodes = base_dir / nodes
        if not edges.is_absolute():
            edges = base_dir / edges
        splits = ds.get("splits")
        if splits is not None and not Path(splits).is_absolute():
            splits = base_dir / splits
        g = load_graph(nodes, edges,
                       add_self_loops=ds.get("self_loops", True),
                       normalize_features=ds.get("normalize_features", True),
                       num_classes=ds.get("num_classes"),
                       splits_path=splits)
        if splits is not None:
            return g
    else:
        g = generate_synthetic(cfg.synthetic)
    return stratified_split(g, cfg.split)
