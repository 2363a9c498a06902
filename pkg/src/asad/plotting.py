"""Figures rendered next to CSV reports (Agg backend, files only)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_fold_accuracy(report, path) -> Path:
    """Bar chart of per-fold test accuracy, one group per subject."""
    path = Path(path)
    runs = report.runs
    fig, ax = plt.subplots(figsize=(6, 3.5))
    labels = [f"{r.subject}/f{r.fold}" for r in runs]
    ax.bar(range(len(runs)), [r.accuracy for r in runs], color="tab:blue")
    ax.axhline(report.mean_accuracy(), color="k", lw=1, ls="--", label=f"mean {report.mean_accuracy():.3f}")
    ax.set_xticks(range(len(runs)))
    ax.set_xticklabels(labels, rotation=60, fontsize=7)
    ax.set_ylim(0, 1)
    ax.set_ylabel("test accuracy")
    title = runs[0].model if runs else ""
    ax.set_title(f"{title} ({runs[0].duration_s:g} s windows)" if runs else "")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_training_curves(report, path) -> Path:
    """Validation loss and accuracy per epoch for every run and training stage."""
    path = Path(path)
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(8, 3.2))
    for r in report.runs:
        for stage, entries in r.logs.items():
            if not entries:
                continue
            ep = [e.epoch for e in entries]
            label = f"{r.subject}/f{r.fold} {stage}"
            a1.plot(ep, [e.val_loss for e in entries], marker=".", label=label)
            a2.plot(ep, [e.val_accuracy for e in entries], marker=".", label=label)
    a1.set_xlabel("epoch")
    a1.set_ylabel("validation loss")
    a2.set_xlabel("epoch")
    a2.set_ylabel("validation accuracy")
    if a1.lines:
        a2.legend(fontsize=6)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_report_figures(report, csv_path) -> list:
    """Write ``<stem>_folds.png`` and ``<stem>_curves.png`` beside ``csv_path``."""
    csv_path = Path(csv_path)
    base = csv_path.with_suffix("")
    return [plot_fold_accuracy(report, f"{base}_folds.png"), plot_training_curves(report, f"{base}_curves.png")]
