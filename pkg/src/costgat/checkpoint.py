"""Versioned JSON checkpoints for trained ensembles.

Arrays are stored as base64-encoded little-endian bytes with dtype and
shape, so a save/load round trip is bit-exact.
"""

from __future__ import annotations

import base64
import json
from dataclasses import asdict

import numpy as np

from .boosting import CostMatrix, EnsembleModel
from .errors import CheckpointError
from .gat import GatConfig, SparseAttention, WeakClassifierState

FORMAT_VERSION = 1


def encode_array(arr: np.ndarray) -> dict:
    arr = np.ascontiguousarray(arr)
    if arr.dtype.byteorder == ">":
        arr = arr.astype(arr.dtype.newbyteorder("<"))
    return {"dtype": arr.dtype.str, "shape": list(arr.shape),
            "data": base64.b64encode(arr.tobytes()).decode("ascii")}


def decode_array(doc: dict) -> np.ndarray:
    raw = base64.b64decode(doc["data"])
    return np.frombuffer(raw, dtype=np.dtype(doc["dtype"])).reshape(doc["shape"]).copy()


def _encode_stage(state: WeakClassifierState) -> dict:
    return {
        "weights": [[encode_array(w) for w in layer] for layer in state.weights],
        "attn_vectors": [[encode_array(a) for a in layer] for layer in state.attn_vectors],
        "gat_head": encode_array(state.gat_head),
        "mix_weight": encode_array(state.mix_weight),
        "attention": {
            "offsets": encode_array(state.attention.offsets),
            "targets": encode_array(state.attention.targets),
            "values": encode_array(state.attention.values),
            "num_nodes": state.attention.num_nodes,
        },
        "probs": encode_array(state.probs),
        "scores": encode_array(state.scores),
        "chain_mode": state.chain_mode,
        "weight_norm": state.weight_norm,
    }


def _decode_stage(doc: dict) -> WeakClassifierState:
    att = doc["attention"]
    return WeakClassifierState(
        weights=[[decode_array(w) for w in layer] for layer in doc["weights"]],
        attn_vectors=[[decode_array(a) for a in layer] for layer in doc["attn_vectors"]],
        gat_head=decode_array(doc["gat_head"]),
        mix_weight=decode_array(doc["mix_weight"]),
        attention=SparseAttention(offsets=decode_array(att["offsets"]),
                                  targets=decode_array(att["targets"]),
                                  values=decode_array(att["values"]),
                                  num_nodes=att["num_nodes"]),
        probs=decode_array(doc["probs"]),
        scores=decode_array(doc["scores"]),
        chain_mode=doc["chain_mode"],
        weight_norm=doc["weight_norm"],
    )


def save_checkpoint(model: EnsembleModel, path) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "config": asdict(model.config),
        "chain_mode": model.chain_mode,
        "cost_matrix": {"scheme": model.cost_matrix.scheme,
                        "matrix": encode_array(model.cost_matrix.matrix)},
        "stages": [_encode_stage(s) for s in model.stages],
        "final_weights": encode_array(model.final_weights),
        "train_ids": encode_array(model.train_ids),
        "train_labels": encode_array(model.train_labels),
        "feature_dim": model.feature_dim,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path) -> EnsembleModel:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version}")
    return EnsembleModel(
        stages=[_decode_stage(s) for s in doc["stages"]],
        cost_matrix=CostMatrix(matrix=decode_array(doc["cost_matrix"]["matrix"]),
                               scheme=doc["cost_matrix"]["scheme"]),
        config=GatConfig(**doc["config"]),
        chain_mode=doc["chain_mode"],
        final_weights=decode_array(doc["final_weights"]),
        train_ids=decode_array(doc["train_ids"]),
        train_labels=decode_array(doc["train_labels"]),
        feature_dim=doc["feature_dim"],
    )
