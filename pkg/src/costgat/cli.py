"""Command-line entry point.

Subcommands: train, evaluate, ir-sweep, depth-sweep, hp-sweep, time-epochs,
gen-synthetic, verify-bound. Every run writes into a fresh timestamped
subdirectory of the output directory; tables are CSV and each table gets a
rendered figure next to it. Exit codes: 0 success, 2 config error, 3 data
error, 4 training error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import figures
from .boosting import verify_bound
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, build_run_graph, load_run_config, parse_run_config
from .errors import (CheckpointError, ConfigError, ContractError, CostgatError,
                     DegenerateDistributionError, IngestionError, TrainingError)
from .experiments import (DEPTH_SWEEP_COLUMNS, HP_SWEEP_COLUMNS, IR_SWEEP_COLUMNS,
                          TIMING_COLUMNS, depth_sweep, hp_sweep, ir_sweep,
                          time_epochs, write_csv)
from .graphdata import stratified_split
from .synthetic import SyntheticSpec, generate_synthetic
from .training import evaluate_model, train_ensemble

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_TRAINING = 4


def make_run_dir(out_dir, command: str) -> Path:
    """Fresh timestamped subdirectory; reruns never overwrite earlier runs."""
    base = Path(out_dir)
    base.mkdir(parents=True, exist_ok=True)
    stamp = time.strftime("%Y%m%dT%H%M%S")
    for counter in range(10000):
        suffix = f"-{counter:02d}" if counter else ""
        candidate = base / f"{command}-{stamp}{suffix}"
        try:
            candidate.mkdir()
            return candidate
        except FileExistsError:
            continue
    raise CostgatError(f"cannot allocate a run directory under {base}")


def _load_config(args) -> RunConfig:
    if args.config is None:
        raise ConfigError("--config is required for this command")
    cfg = load_run_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "out", None) is not None:
        cfg = replace(cfg, out_dir=args.out)
    if getattr(args, "dataset", None) is not None:
        cfg = replace(cfg, dataset=_dataset_override(args.dataset), synthetic=None)
    return cfg


def _dataset_override(name_or_path: str) -> dict:
    root = Path(name_or_path)
    if not root.is_dir():
        root = Path("data") / name_or_path
    nodes = root / "nodes.csv"
    edges = root / "edges.csv"
    if not nodes.exists() or not edges.exists():
        raise IngestionError(f"dataset directory {root} lacks nodes.csv/edges.csv")
    splits = root / "splits.json"
    return {"nodes": str(nodes), "edges": str(edges),
            "splits": str(splits) if splits.exists() else None}


def _config_base_dir(args) -> Path:
    return Path(args.config).resolve().parent if args.config else Path(".")


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of numbers: {text!r}") from None


def _parse_ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of integers: {text!r}") from None


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = _load_config(args)
    g = build_run_graph(cfg, base_dir=_config_base_dir(args))
    result = train_ensemble(g, cfg.gat, cfg.stages, cost_scheme=cfg.cost_scheme,
                            seed=cfg.seed, chain_mode=cfg.chain_mode,
                            explicit_costs=cfg.explicit_costs,
                            label_coding=cfg.label_coding)
    report = evaluate_model(result.model, g, "test")
    run_dir = make_run_dir(cfg.out_dir, "train")
    save_checkpoint(result.model, run_dir / "checkpoint.json")
    # report.json stays timing-free so identical seeds give identical bytes
    (run_dir / "report.json").write_text(report.to_json(include_timing=False))
    write_csv([{"seed": cfg.seed, **report.summary_row()}], run_dir / "summary.csv")
    timing_rows = [{"run": 0, "epoch": i, "ms": ms}
                   for i, ms in enumerate(result.epoch_ms)]
    write_csv(timing_rows, run_dir / "timings.csv", TIMING_COLUMNS)
    figures.plot_loss_curves(result.stage_losses, run_dir / "loss_curves.png")
    figures.plot_per_class(report, run_dir / "per_class.png")
    print(f"run dir: {run_dir}")
    for key, value in report.summary_row().items():
        print(f"{key}: {value:.4f}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    model = load_checkpoint(args.checkpoint)
    g = build_run_graph(cfg, base_dir=_config_base_dir(args))
    report = evaluate_model(model, g, args.mask, reuse_stored=not args.reinference)
    run_dir = make_run_dir(cfg.out_dir, "evaluate")
    (run_dir / "report.json").write_text(report.to_json(include_timing=False))
    write_csv([{"mask": args.mask, **report.summary_row()}], run_dir / "summary.csv")
    figures.plot_per_class(report, run_dir / "per_class.png")
    print(f"run dir: {run_dir}")
    for key, value in report.summary_row().items():
        print(f"{key}: {value:.4f}")
    return 0


def cmd_ir_sweep(args) -> int:
    cfg = _load_config(args)
    g = build_run_graph(cfg, base_dir=_config_base_dir(args))
    irs = _parse_floats(args.irs)
    seeds = _parse_ints(args.seeds)
    rows = ir_sweep(g, cfg, irs, seeds)
    run_dir = make_run_dir(cfg.out_dir, "ir-sweep")
    write_csv(rows, run_dir / "ir_sweep.csv", IR_SWEEP_COLUMNS)
    figures.plot_metric_curves(rows, "ir", run_dir / "ir_sweep.png",
                               x_label="imbalance ratio")
    print(f"run dir: {run_dir} ({len(rows)} rows)")
    return 0


def cmd_depth_sweep(args) -> int:
    cfg = _load_config(args)
    g = build_run_graph(cfg, base_dir=_config_base_dir(args))
    layers = _parse_ints(args.layers)
    seeds = _parse_ints(args.seeds)
    rows = depth_sweep(g, cfg, layers, include_stacked_ablation=args.ablation,
                       seeds=seeds)
    run_dir = make_run_dir(cfg.out_dir, "depth-sweep")
    write_csv(rows, run_dir / "depth_sweep.csv", DEPTH_SWEEP_COLUMNS)
    figures.plot_metric_curves(rows, "layers", run_dir / "depth_sweep.png",
                               x_label="model depth",
                               group_key="variant" if args.ablation else None)
    print(f"run dir: {run_dir} ({len(rows)} rows)")
    return 0


def cmd_hp_sweep(args) -> int:
    cfg = _load_config(args)
    base_dir = _config_base_dir(args)

    def g_factory(split):
        return build_run_graph(replace(cfg, split=split), base_dir=base_dir)

    rows = hp_sweep(g_factory, cfg,
                    _parse_floats(args.train_fractions),
                    _parse_ints(args.hids),
                    _parse_floats(args.lrs),
                    seeds=_parse_ints(args.seeds))
    run_dir = make_run_dir(cfg.out_dir, "hp-sweep")
    write_csv(rows, run_dir / "hp_sweep.csv", HP_SWEEP_COLUMNS)
    figures.plot_metric_curves(rows, "hid_embedding_size", run_dir / "hp_sweep.png",
                               x_label="embedding size")
    print(f"run dir: {run_dir} ({len(rows)} rows)")
    return 0


def cmd_time_epochs(args) -> int:
    cfg = _load_config(args)
    rows, medians = time_epochs(cfg, runs=args.runs, base_dir=_config_base_dir(args))
    run_dir = make_run_dir(cfg.out_dir, "time-epochs")
    write_csv(rows, run_dir / "timings.csv", TIMING_COLUMNS)
    (run_dir / "medians.json").write_text(json.dumps(
        {"median_ms_per_epoch": medians,
         "overall_median_ms": float(np.median(medians))}, indent=2))
    figures.plot_epoch_times(medians, run_dir / "epoch_times.png")
    print(f"run dir: {run_dir}")
    print(f"overall median ms/epoch: {float(np.median(medians)):.3f}")
    return 0


def cmd_gen_synthetic(args) -> int:
    if args.config is not None:
        cfg = load_run_config(args.config)
        if cfg.synthetic is None:
            raise ConfigError("config has no 'synthetic' section")
        spec = cfg.synthetic
        if args.seed is not None:
            spec = replace(spec, seed=args.seed)
        split = cfg.split
    else:
        if args.nodes_per_class is None:
            raise ConfigError("gen-synthetic needs --config or --nodes-per-class")
        spec = SyntheticSpec(
            nodes_per_class=tuple(_parse_ints(args.nodes_per_class)),
            intra_class_edge_prob=args.intra_prob,
            inter_class_edge_prob=args.inter_prob,
            feature_dim=args.feature_dim,
            class_mean_separation=args.separation,
            feature_noise_std=args.noise,
            seed=args.seed if args.seed is not None else 0)
        split = None
    g = generate_synthetic(spec)
    out = Path(args.out if args.out is not None else "synthetic")
    out.mkdir(parents=True, exist_ok=True)
    _write_graph_csv(g, out)
    if split is not None:
        with_masks = stratified_split(g, split)
        doc = {name: np.flatnonzero(mask).tolist()
               for name, mask in (("train", with_masks.train_mask),
                                  ("val", with_masks.val_mask),
                                  ("test", with_masks.test_mask))}
        (out / "splits.json").write_text(json.dumps(doc))
    print(f"wrote {g.num_nodes} nodes / {g.num_directed_edges} directed edges to {out}")
    return 0


def _write_graph_csv(g, out: Path) -> None:
    with open(out / "nodes.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "label"] + [f"f{i}" for i in range(g.feature_dim)])
        for i in range(g.num_nodes):
            writer.writerow([i, int(g.labels[i])]
                            + [repr(float(x)) for x in g.features[i]])
    src = g.edge_sources()
    with open(out / "edges.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["src", "dst"])
        for s, d in zip(src, g.csr_targets):
            if s < d:  # one row per undirected edge; loader re-symmetrizes
                writer.writerow([int(s), int(d)])


def cmd_verify_bound(args) -> int:
    out = Path(args.out) if args.out else Path("runs")
    if args.checkpoint is not None:
        model = load_checkpoint(args.checkpoint)
        report = verify_bound(model)
        run_dir = make_run_dir(out, "verify-bound")
        (run_dir / "bound.json").write_text(json.dumps(report.to_json_dict(), indent=2))
        status = "holds" if report.holds else "VIOLATED"
        print(f"bound {status}: lhs={report.lhs:.6g} rhs={report.rhs:.6g} "
              f"(excluded {report.num_excluded})")
        return 0 if report.holds else 1
    rows, violations = _randomized_bound_table(args.randomized, args.seed or 0)
    run_dir = make_run_dir(out, "verify-bound")
    write_csv(rows, run_dir / "bound_table.csv")
    figures.plot_bound_slack(rows, run_dir / "bound_slack.png")
    print(f"run dir: {run_dir}")
    print(f"checked {len(rows)} randomized models; violations: {violations}")
    return 0 if violations == 0 else 1


def _randomized_bound_table(count: int, seed: int) -> tuple[list[dict], int]:
    from .gat import GatConfig
    from .graphdata import SplitSpec

    rng = np.random.default_rng(seed)
    rows = []
    violations = 0
    schemes = ("uniform", "inverse", "log1p")
    for idx in range(count):
        k = int(rng.integers(2, 4))
        stages = int(rng.integers(1, 4))
        scheme = schemes[idx % len(schemes)]
        counts = tuple(int(rng.integers(8, 30)) for _ in range(k))
        spec = SyntheticSpec(nodes_per_class=counts, intra_class_edge_prob=0.3,
                             inter_class_edge_prob=0.08, feature_dim=4,
                             class_mean_separation=float(rng.uniform(0.5, 3.0)),
                             feature_noise_std=1.0, seed=int(rng.integers(0, 2**31)))
        g = stratified_split(generate_synthetic(spec),
                             SplitSpec(0.4, 0.2, 0.4, seed=int(rng.integers(0, 2**31))))
        cfg = GatConfig(hid=4, heads=1, epochs=int(rng.integers(5, 25)),
                        learning_rate=0.02)
        result = train_ensemble(g, cfg, stages, cost_scheme=scheme,
                                seed=int(rng.integers(0, 2**31)))
        report = verify_bound(result.model)
        if not report.holds:
            violations += 1
        rows.append({"model": idx, "classes": k, "stages": stages, "scheme": scheme,
                     **report.to_json_dict()})
    return rows, violations


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="costgat",
        description="Cost-sensitive boosted graph attention for imbalanced "
                    "node classification")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="JSON run config")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--dataset", help="dataset name under ./data or a directory path")

    p = sub.add_parser("train", help="train an ensemble and evaluate on the test mask")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="inference-only evaluation of a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--mask", default="test", choices=("train", "val", "test"))
    p.add_argument("--reinference", action="store_true",
                   help="re-run every stage instead of reusing stored outputs")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ir-sweep", help="retrain across target imbalance ratios")
    common(p)
    p.add_argument("--irs", default="0.1,0.2,0.4,0.6,0.8,1.0",
                   help="comma-separated target ratios")
    p.add_argument("--seeds", default="0", help="comma-separated seeds")
    p.set_defaults(func=cmd_ir_sweep)

    p = sub.add_parser("depth-sweep", help="retrain across boosting depths")
    common(p)
    p.add_argument("--layers", default="1,2,3,4,5,6,7,8,9")
    p.add_argument("--seeds", default="0")
    p.add_argument("--ablation", action="store_true",
                   help="also run the plain stacked-GAT ablation")
    p.set_defaults(func=cmd_depth_sweep)

    p = sub.add_parser("hp-sweep", help="grid over train size, width, learning rate")
    common(p)
    p.add_argument("--train-fractions", default="0.2")
    p.add_argument("--hids", default="32,64,128")
    p.add_argument("--lrs", default="0.002,0.01")
    p.add_argument("--seeds", default="0")
    p.set_defaults(func=cmd_hp_sweep)

    p = sub.add_parser("time-epochs", help="median wall time per training epoch")
    common(p)
    p.add_argument("--runs", type=int, default=5)
    p.set_defaults(func=cmd_time_epochs)

    p = sub.add_parser("gen-synthetic", help="write a synthetic dataset as CSV")
    common(p, config_required=False)
    p.add_argument("--nodes-per-class", help="e.g. 50,500")
    p.add_argument("--intra-prob", type=float, default=0.05)
    p.add_argument("--inter-prob", type=float, default=0.005)
    p.add_argument("--feature-dim", type=int, default=8)
    p.add_argument("--separation", type=float, default=2.0)
    p.add_argument("--noise", type=float, default=1.0)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("verify-bound",
                       help="check the cumulative-cost bound on trained models")
    common(p, config_required=False)
    p.add_argument("--checkpoint", help="verify one saved model")
    p.add_argument("--randomized", type=int, default=20,
                   help="train and verify this many randomized small models")
    p.set_defaults(func=cmd_verify_bound)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IngestionError, CheckpointError, ContractError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingError, DegenerateDistributionError) as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return EXIT_TRAINING


if __name__ == "__main__":
    sys.exit(main())
