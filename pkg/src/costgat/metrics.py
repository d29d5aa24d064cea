"""Imbalance-aware evaluation: confusion matrices, macro recall / F1 / AUC,
G-mean, and a JSON-serializable report.

Macro averages exclude classes with zero support (with a warning) instead of
letting them contribute zeros.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.stats import rankdata

from .errors import ContractError


def confusion_matrix(predicted: np.ndarray, truth: np.ndarray, num_classes: int
                     ) -> np.ndarray:
    """K x K counts; entry (i, j) counts truth-i nodes predicted j."""
    predicted = np.asarray(predicted, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if predicted.shape != truth.shape:
        raise ContractError(
            f"prediction length {predicted.shape} vs truth {truth.shape}")
    for name, arr in (("predicted", predicted), ("truth", truth)):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise ContractError(f"{name} labels outside [0, {num_classes})")
    conf = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(conf, (truth, predicted), 1)
    return conf


def per_class_recall(conf: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(recalls, support); recall is NaN where support is zero."""
    support = conf.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        recall = np.where(support > 0, np.diag(conf) / support, np.nan)
    return recall, support


def macro_recall(conf: np.ndarray) -> float:
    recall, support = per_class_recall(conf)
    present = support > 0
    if not present.all():
        warnings.warn(f"classes with zero support excluded from macro recall: "
                      f"{np.flatnonzero(~present).tolist()}")
    if not present.any():
        raise ContractError("macro recall over an empty evaluation set")
    return float(recall[present].mean())


def macro_f1(conf: np.ndarray) -> float:
    support = conf.sum(axis=1)
    predicted = conf.sum(axis=0)
    keep = (support > 0) | (predicted > 0)
    if not keep.all():
        warnings.warn(f"classes neither present nor predicted excluded from macro F1: "
                      f"{np.flatnonzero(~keep).tolist()}")
    diag = np.diag(conf).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(predicted > 0, diag / predicted, 0.0)
        recall = np.where(support > 0, diag / support, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2 * precision * recall / denom, 0.0)
    if not keep.any():
        raise ContractError("macro F1 over an empty evaluation set")
    return float(f1[keep].mean())


def macro_auc(scores: np.ndarray, truth: np.ndarray) -> float:
    """Mean one-vs-rest rank AUC with average ranks on ties.

    AUC_k = (sum of positive ranks - n+(n+ + 1)/2) / (n+ n-), computed on
    the column of scores for class k.
    """
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.int64)
    if scores.ndim != 2 or scores.shape[0] != truth.size:
        raise ContractError(f"scores {scores.shape} vs {truth.size} truth labels")
    num_classes = scores.shape[1]
    aucs = []
    skipped = []
    for k in range(num_classes):
        positive = truth == k
        n_pos = int(positive.sum())
        n_neg = truth.size - n_pos
        if n_pos == 0 or n_neg == 0:
            skipped.append(k)
            continue
        ranks = rankdata(scores[:, k], method="average")
        auc = (ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
        aucs.append(auc)
    if skipped:
        warnings.warn(f"classes absent from truth excluded from macro AUC: {skipped}")
    if not aucs:
        raise ContractError("macro AUC needs at least one class present with both sides")
    return float(np.mean(aucs))


def g_mean(conf: np.ndarray) -> float:
    """Geometric mean of per-class recalls (binary: sqrt(TPR * TNR))."""
    recall, support = per_class_recall(conf)
    present = support > 0
    if not present.all():
        warnings.warn(f"classes with zero support excluded from G-mean: "
                      f"{np.flatnonzero(~present).tolist()}")
    if not present.any():
        raise ContractError("G-mean over an empty evaluation set")
    rates = recall[present]
    if np.any(rates == 0.0):
        return 0.0
    return float(np.exp(np.log(rates).mean()))


@dataclass
class EvalReport:
    confusion: np.ndarray
    macro_recall: float
    macro_f1: float
    macro_auc: float
    g_mean: float
    per_class: list
    wall_time_per_epoch_ms: Optional[list] = None

    def to_json_dict(self, include_timing: bool = True) -> dict:
        doc = {
            "confusion": self.confusion.tolist(),
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "macro_auc": self.macro_auc,
            "g_mean": self.g_mean,
            "per_class": self.per_class,
        }
        if include_timing and self.wall_time_per_epoch_ms is not None:
            doc["wall_time_per_epoch_ms"] = self.wall_time_per_epoch_ms
        return doc

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_json_dict(include_timing), indent=2)

    @classmethod
    def from_json_dict(cls, doc: dict) -> "EvalReport":
        return cls(confusion=np.asarray(doc["confusion"], dtype=np.int64),
                   macro_recall=doc["macro_recall"], macro_f1=doc["macro_f1"],
                   macro_auc=doc["macro_auc"], g_mean=doc["g_mean"],
                   per_class=doc["per_class"],
                   wall_time_per_epoch_ms=doc.get("wall_time_per_epoch_ms"))

    def summary_row(self) -> dict:
        return {"macro_auc": self.macro_auc, "macro_recall": self.macro_recall,
                "macro_f1": self.macro_f1, "g_mean": self.g_mean}


def evaluate_predictions(predicted: np.ndarray, scores: np.ndarray,
                         truth: np.ndarray, num_classes: int,
                         wall_time_per_epoch_ms: Optional[list] = None) -> EvalReport:
    """Assemble the full report for one set of predictions."""
    conf = confusion_matrix(predicted, truth, num_classes)
    recall, support = per_class_recall(conf)
    predicted_counts = conf.sum(axis=0)
    diag = np.diag(conf).astype(np.float64)
    per_class = []
    for k in range(num_classes):
        precision = float(diag[k] / predicted_counts[k]) if predicted_counts[k] else 0.0
        rec = float(recall[k]) if support[k] else 0.0
        f1 = 2 * precision * rec / (precision + rec) if (precision + rec) else 0.0
        per_class.append({"label": k, "support": int(support[k]),
                          "precision": precision, "recall": rec, "f1": f1})
    return EvalReport(confusion=conf,
                      macro_recall=macro_recall(conf),
                      macro_f1=macro_f1(conf),
                      macro_auc=macro_auc(scores, truth),
                      g_mean=g_mean(conf),
                      per_class=per_class,
                      wall_time_per_epoch_ms=wall_time_per_epoch_ms)
