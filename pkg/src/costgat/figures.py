"""Matplotlib rendering for the report path: every command that writes a
delimited table also drops a figure next to it."""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

METRIC_KEYS = ("g_mean", "macro_auc", "macro_recall", "macro_f1")
METRIC_LABELS = {"g_mean": "G-mean", "macro_auc": "Macro AUC",
                 "macro_recall": "Macro recall", "macro_f1": "Macro F1"}


def _group_mean(rows: Sequence[dict], x_key: str, metric: str, group: dict
                ) -> tuple[list, list]:
    xs = sorted({row[x_key] for row in rows
                 if all(row.get(k) == v for k, v in group.items())})
    ys = []
    for x in xs:
        vals = [row[metric] for row in rows
                if row[x_key] == x and all(row.get(k) == v for k, v in group.items())]
        ys.append(sum(vals) / len(vals))
    return xs, ys


def plot_metric_curves(rows: Sequence[dict], x_key: str, path, *,
                       x_label: str | None = None,
                       group_key: str | None = None) -> None:
    """Mean metric vs. x; one line per metric (and per group when given)."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    groups = sorted({row[group_key] for row in rows}) if group_key else [None]
    for g in groups:
        selector = {group_key: g} if group_key else {}
        for metric in METRIC_KEYS:
            if not any(metric in row for row in rows):
                continue
            xs, ys = _group_mean(rows, x_key, metric, selector)
            label = METRIC_LABELS[metric] if g is None else f"{METRIC_LABELS[metric]} ({g})"
            style = "-" if g in (None, groups[0]) else "--"
            ax.plot(xs, ys, style, marker="o", markersize=3, label=label)
    ax.set_xlabel(x_label or x_key)
    ax.set_ylabel("score")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_loss_curves(stage_losses: Sequence[Sequence[float]], path) -> None:
    """Per-stage training loss trajectories."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for idx, losses in enumerate(stage_losses):
        ax.plot(range(len(losses)), losses, label=f"stage {idx + 1}")
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_per_class(report, path) -> None:
    """Grouped per-class precision/recall/F1 bars for one evaluation."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    labels = [row["label"] for row in report.per_class]
    width = 0.25
    for offset, key in enumerate(("precision", "recall", "f1")):
        xs = [x + (offset - 1) * width for x in range(len(labels))]
        ax.bar(xs, [row[key] for row in report.per_class], width=width, label=key)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels([str(x) for x in labels])
    ax.set_xlabel("class")
    ax.set_ylim(0, 1.05)
    ax.grid(alpha=0.3, axis="y")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_bound_slack(rows: Sequence[dict], path) -> None:
    """Realized cost vs. its upper bound for a batch of verified models."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    xs = [row["model"] for row in rows]
    ax.plot(xs, [max(row["lhs"], 1e-12) for row in rows], "o-", label="realized cost")
    ax.plot(xs, [max(row["rhs"], 1e-12) for row in rows], "s--", label="upper bound")
    ax.set_xlabel("model index")
    ax.set_ylabel("cumulative misclassification cost")
    ax.set_yscale("log")
    ax.grid(alpha=0.3, which="both")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_epoch_times(medians: Sequence[float], path) -> None:
    """Median wall time per epoch across repeated runs."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.plot(range(len(medians)), medians, lw=0.9)
    ax.set_xlabel("epoch (stage-major)")
    ax.set_ylabel("median wall time [ms]")
    ax.set_yscale("log")
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
