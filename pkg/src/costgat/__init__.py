"""Cost-sensitive boosted graph attention networks for class-imbalanced
node classification."""

from .autodiff import Tape, Tensor
from .boosting import (CostMatrix, EnsembleModel, build_cost_matrix,
                       ensemble_decision, load_cost_matrix, misclassification_cost,
                       samme_r_scores, update_weights, verify_bound)
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, build_run_graph, load_run_config, parse_run_config
from .gat import (GatConfig, SparseAttention, WeakClassifierState,
                  attention_coefficients, feature_update, gat_forward,
                  mixed_linear_probs, train_weak_classifier)
from .graphdata import (Graph, SplitSpec, build_graph, imbalance_ratio, load_graph,
                        stratified_split, subsample_to_ir)
from .metrics import (EvalReport, confusion_matrix, evaluate_predictions, g_mean,
                      macro_auc, macro_f1, macro_recall)
from .optim import Adam
from .synthetic import SyntheticSpec, generate_synthetic
from .training import evaluate_model, predict, train_ensemble

__version__ = "0.1.0"

__all__ = [
    "Adam", "CostMatrix", "EnsembleModel", "EvalReport", "GatConfig", "Graph",
    "RunConfig", "SparseAttention", "SplitSpec", "SyntheticSpec", "Tape", "Tensor",
    "WeakClassifierState", "attention_coefficients", "build_cost_matrix",
    "build_graph", "build_run_graph", "confusion_matrix", "ensemble_decision",
    "evaluate_model", "evaluate_predictions", "feature_update", "g_mean",
    "gat_forward", "generate_synthetic", "imbalance_ratio", "load_checkpoint",
    "load_cost_matrix", "load_graph", "load_run_config", "macro_auc", "macro_f1",
    "macro_recall", "mixed_linear_probs", "parse_run_config", "predict",
    "samme_r_scores", "save_checkpoint", "stratified_split", "subsample_to_ir",
    "train_ensemble", "train_weak_classifier", "update_weights", "verify_bound",
]
