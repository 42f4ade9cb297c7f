"""Render benchmark reports as bar-chart figures next to the delimited output."""

from __future__ import annotations

from pathlib import Path
from typing import Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluate import EvalReport

__all__ = ["render_report_figure"]

_TASK_COLOR = "#4878a8"
_AVG_COLOR = "#c44e52"


def render_report_figure(report: EvalReport, path: Union[str, Path]) -> Path:
    """Write a two-panel accuracy/WER figure for the per-task rows plus Avg."""

    rows = report.all_rows()
    labels = [row.task for row in rows]
    accuracy = [row.qa_accuracy_percent for row in rows]
    wer = [row.wer_percent for row in rows]
    colors = [_TASK_COLOR] * (len(rows) - 1) + [_AVG_COLOR]
    positions = range(len(rows))

    fig, (ax_acc, ax_wer) = plt.subplots(
        1, 2, figsize=(max(7.0, 1.4 * len(rows)), 4.0)
    )
    ax_acc.bar(positions, accuracy, color=colors)
    ax_acc.set_ylabel("QA accuracy (%)")
    ax_acc.set_ylim(0, 100)
    ax_wer.bar(positions, wer, color=colors)
    ax_wer.set_ylabel("WER (%)")
    ax_wer.set_ylim(bottom=0)
    for ax in (ax_acc, ax_wer):
        ax.set_xticks(list(positions))
        ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
        ax.spines["top"].set_visible(False)
        ax.spines["right"].set_visible(False)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out
