"""Report emission: JSON/CSV artifacts and SVG charts."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import CrossEvalResult, EvalReport, RocCurve  # noqa: E402

_STYLES = [
    dict(color="tab:blue", linestyle="-", marker="D"),
    dict(color="tab:green", linestyle="--", marker="s"),
    dict(color="black", linestyle=":", marker="v"),
    dict(color="tab:red", linestyle="-.", marker="x"),
    dict(color="tab:purple", linestyle="-", marker="o"),
]


def write_report_json(report: EvalReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")


def write_roc_csv(roc: RocCurve, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["theta", "fpr", "tpr"])
        writer.writerows(roc.as_rows())


def write_cross_csv(result: CrossEvalResult, path: str | Path) -> None:
    """Fooling-ratio matrix: one row per (generator, fpr target)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["generator", "fpr_target"] + list(result.discriminator_labels))
        for gi, gl in enumerate(result.generator_labels):
            for ti, target in enumerate(result.fpr_targets):
                row = [gl, target] + [f"{result.fooling[gi, di, ti]:.6f}"
                                      for di in range(len(result.discriminator_labels))]
                writer.writerow(row)


def plot_roc(curves: dict[str, RocCurve], path: str | Path, min_fpr: float = 1e-4) -> None:
    """ROC curves on a log-scaled FPR axis."""
    fig, ax = plt.subplots(figsize=(5, 4))
    for (label, roc), style in zip(curves.items(), _STYLES * 10):
        pts = [(max(fpr, min_fpr), tpr) for _, fpr, tpr in roc.points]
        ax.plot([p[0] for p in pts], [p[1] for p in pts], label=label,
                linewidth=1.5, markersize=3, **style)
    ax.set_xscale("log")
    ax.set_xlabel("False Positive Rate")
    ax.set_ylabel("True Positive Rate")
    ax.grid(True, alpha=0.4)
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_fooling_vs_fpr(series: dict[str, list[tuple[float, float]]],
                        path: str | Path) -> None:
    """Fooling ratio against FPR (log scale), one line per discriminator."""
    fig, ax = plt.subplots(figsize=(5, 4))
    for (label, points), style in zip(series.items(), _STYLES * 10):
        points = sorted(points)
        ax.plot([p[0] for p in points], [p[1] for p in points], label=label,
                linewidth=1.5, markersize=4, **style)
    ax.set_xscale("log")
    ax.set_xlabel("False Positive Rate")
    ax.set_ylabel("Fooling Ratio")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(True, alpha=0.4)
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_fooling_bars(result: CrossEvalResult, target: float, path: str | Path) -> None:
    """Grouped bars: fooling ratio per discriminator, grouped by generator."""
    ti = result.fpr_targets.index(target)
    n_gen = len(result.generator_labels)
    n_disc = len(result.discriminator_labels)
    width = 0.8 / n_disc
    fig, ax = plt.subplots(figsize=(1.5 + 1.2 * n_gen, 4))
    for di, dl in enumerate(result.discriminator_labels):
        xs = [gi + di * width for gi in range(n_gen)]
        ax.bar(xs, result.fooling[:, di, ti], width=width, label=dl)
    ax.set_xticks([gi + 0.4 - width / 2 for gi in range(n_gen)])
    ax.set_xticklabels(result.generator_labels)
    ax.set_xlabel("Generator")
    ax.set_ylabel(f"Fooling Ratio at FPR {target:g}")
    ax.set_ylim(0, 1.02)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def write_trajectory_csv(rows: list[dict], path: str | Path) -> None:
    """Per-round fooling trajectory of the defense/attack game."""
    if not rows:
        raise ValueError("no trajectory rows to write")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
