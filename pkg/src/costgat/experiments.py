"""Experiment protocols: imbalance-ratio sweep, depth sweep, hyperparameter
sweep, and per-epoch timing. Each returns a list of row dicts with fixed
columns, ready for CSV emission.
"""

from __future__ import annotations

import csv
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import RunConfig, build_run_graph
from .graphdata import Graph, imbalance_ratio, stratified_split, subsample_to_ir
from .training import evaluate_model, train_ensemble

IR_SWEEP_COLUMNS = ("ir", "seed", "g_mean", "macro_auc", "macro_recall", "macro_f1")
DEPTH_SWEEP_COLUMNS = ("layers", "variant", "seed", "g_mean", "macro_auc",
                       "macro_recall", "macro_f1")
HP_SWEEP_COLUMNS = ("train_fraction", "hid_embedding_size", "learning_rate", "seed",
                    "g_mean", "macro_auc", "macro_recall", "macro_f1")
TIMING_COLUMNS = ("run", "epoch", "ms")


def _run_once(g: Graph, cfg: RunConfig, seed: int, *, stages: Optional[int] = None,
              chain_mode: Optional[str] = None) -> dict:
    result = train_ensemble(
        g, cfg.gat, stages if stages is not None else cfg.stages,
        cost_scheme=cfg.cost_scheme, seed=seed,
        chain_mode=chain_mode if chain_mode is not None else cfg.chain_mode,
        explicit_costs=cfg.explicit_costs, label_coding=cfg.label_coding)
    report = evaluate_model(result.model, g, "test")
    return report.summary_row()


def ir_sweep(base_graph: Graph, cfg: RunConfig, ir_list: Sequence[float],
             seeds: Sequence[int]) -> list[dict]:
    """Subsample the majority class to each target ratio, retrain, evaluate.

    The base graph must be at least as imbalanced as the smallest target;
    masks are re-drawn per subsampled graph so splits stay stratified.
    """
    rows = []
    for ir in ir_list:
        for seed in seeds:
            sub = subsample_to_ir(base_graph, ir, seed=seed)
            sub = stratified_split(sub, replace(cfg.split, seed=seed))
            row = {"ir": ir, "seed": seed}
            row.update(_run_once(sub, cfg, seed))
            row["achieved_ir"] = imbalance_ratio(sub)
            rows.append(row)
    return rows


def depth_sweep(g: Graph, cfg: RunConfig, layer_list: Sequence[int],
                include_stacked_ablation: bool = False,
                seeds: Sequence[int] = (0,)) -> list[dict]:
    """Metrics as a function of depth.

    The "boosted" variant runs the full loop with L stages. The "stacked"
    ablation trains a single L-layer classifier whose decision head sits on
    the deep embeddings, i.e. depth without the attention-matrix feature
    update between supervised stages.
    """
    variants = ["boosted"] + (["stacked"] if include_stacked_ablation else [])
    rows = []
    for variant in variants:
        for layers in layer_list:
            for seed in seeds:
                row = {"layers": layers, "variant": variant, "seed": seed}
                if variant == "boosted":
                    row.update(_run_once(g, cfg, seed, stages=layers))
                else:
                    stacked = replace(cfg, gat=replace(cfg.gat, gat_layers=layers),
                                      chain_mode="embedding")
                    row.update(_run_once(g, stacked, seed, stages=1))
                rows.append(row)
    return rows


def hp_sweep(g_factory, cfg: RunConfig, train_fractions: Sequence[float],
             hids: Sequence[int], learning_rates: Sequence[float],
             seeds: Sequence[int] = (0,)) -> list[dict]:
    """Grid over train fraction, embedding size, and learning rate.

    ``g_factory(split_spec)`` must return a graph with masks drawn from the
    given split spec, so the train fraction can vary per cell.
    """
    rows = []
    for frac in train_fractions:
        remainder = 1.0 - frac
        split = replace(cfg.split, train_fraction=frac,
                        val_fraction=remainder / 2.0, test_fraction=remainder / 2.0)
        g = g_factory(split)
        for hid in hids:
            for lr in learning_rates:
                cell_cfg = replace(cfg, gat=replace(cfg.gat, hid=hid, learning_rate=lr))
                for seed in seeds:
                    row = {"train_fraction": frac, "hid_embedding_size": hid,
                           "learning_rate": lr, "seed": seed}
                    row.update(_run_once(g, cell_cfg, seed))
                    rows.append(row)
    return rows


def time_epochs(cfg: RunConfig, runs: int = 5, *, base_dir: Path = Path(".")
                ) -> tuple[list[dict], list[float]]:
    """Wall-clock time per training epoch over repeated runs.

    Dataset loading happens once, outside the timed region. Returns
    (rows, per-epoch medians across runs).
    """
    g = build_run_graph(cfg, base_dir=base_dir)
    samples = []
    rows = []
    for run in range(runs):
        result = train_ensemble(g, cfg.gat, cfg.stages, cost_scheme=cfg.cost_scheme,
                                seed=cfg.seed, chain_mode=cfg.chain_mode,
                                explicit_costs=cfg.explicit_costs,
                                label_coding=cfg.label_coding)
        samples.append(result.epoch_ms)
        for epoch, ms in enumerate(result.epoch_ms):
            rows.append({"run": run, "epoch": epoch, "ms": ms})
    medians = np.median(np.asarray(samples), axis=0).tolist()
    return rows, medians


def write_csv(rows: Sequence[dict], path, columns: Optional[Sequence[str]] = None) -> None:
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    extras = [c for c in (rows[0].keys() if rows else []) if c not in columns]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns) + extras)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
