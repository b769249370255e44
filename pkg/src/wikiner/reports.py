"""Report rendering: delimited tables plus matplotlib figures.

Every CLI report path writes a TSV next to a PNG so results stay both
grep-able and glanceable.  The Agg backend keeps this headless-safe.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .pipeline import EvalReport, SweepRow
from .wikigraph import CoverageReport


def write_eval_tsv(report: EvalReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("category\tprecision\trecall\tf1\toverlap_f1\n")
        for cat in sorted(report.per_category):
            score = report.per_category[cat]
            over = report.overlap_per_category[cat]
            fh.write(f"{cat}\t{score.precision:.2f}\t{score.recall:.2f}\t{score.f1:.2f}\t{over.f1:.2f}\n")
        fh.write(f"OVERALL\t{report.exact.precision:.2f}\t{report.exact.recall:.2f}"
                 f"\t{report.exact_f1:.2f}\t{report.overlap_f1:.2f}\n")
        fh.write(f"FINAL\t\t\t{report.final_score:.2f}\t\n")


def render_eval_figure(report: EvalReport, path: str | Path) -> None:
    cats = sorted(report.per_category)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(max(6.0, 1.2 * len(cats) + 3), 4.0))
    if cats:
        xs = range(len(cats))
        ax1.bar([x - 0.2 for x in xs], [report.per_category[c].f1 for c in cats],
                width=0.4, label="exact")
        ax1.bar([x + 0.2 for x in xs], [report.overlap_per_category[c].f1 for c in cats],
                width=0.4, label="overlap")
        ax1.set_xticks(list(xs))
        ax1.set_xticklabels(cats, rotation=45, ha="right")
        ax1.legend()
    ax1.set_ylabel("F1")
    ax1.set_ylim(0, 100)
    ax1.set_title("Per-category scores")
    names = ["exact", "overlap", "final"]
    values = [report.exact_f1, report.overlap_f1, report.final_score]
    ax2.bar(names, values, color=["#1f77b4", "#ff7f0e", "#2ca02c"])
    for i, v in enumerate(values):
        ax2.text(i, v + 1, f"{v:.1f}", ha="center")
    ax2.set_ylim(0, 105)
    ax2.set_title("Overall")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_sweep_tsv(rows: Sequence[SweepRow], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("config\tmean_f1\tfolds\n")
        for row in rows:
            folds = ",".join(f"{s:.2f}" for s in row.fold_scores)
            fh.write(f"{row.name}\t{row.mean_f1:.2f}\t{folds}\n")


def render_sweep_figure(rows: Sequence[SweepRow], path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(max(6.0, 0.9 * len(rows) + 3), 4.0))
    names = [row.name for row in rows]
    means = [row.mean_f1 for row in rows]
    ax.bar(names, means)
    for i, row in enumerate(rows):
        ax.scatter([i] * len(row.fold_scores), row.fold_scores, color="black", s=12, zorder=3)
    ax.set_ylabel("exact F1 (cross-validated)")
    plt.setp(ax.get_xticklabels(), rotation=30, ha="right")
    ax.set_title("Hyperparameter sweep")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_coverage_tsv(report: CoverageReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("label\tarticles\n")
        for label, count in sorted(report.label_counts.items()):
            fh.write(f"{label}\t{count}\n")
        fh.write(f"TOTAL\t{report.articles_total}\n")
        fh.write(f"LABELED\t{report.articles_labeled}\n")
        fh.write(f"PERCENT\t{report.percent_labeled:.2f}\n")


def render_coverage_figure(report: CoverageReport, path: str | Path) -> None:
    labels = [lab for lab, c in sorted(report.label_counts.items()) if c > 0]
    counts = [report.label_counts[lab] for lab in labels]
    fig, ax = plt.subplots(figsize=(max(6.0, 1.0 * len(labels) + 3), 4.0))
    if labels:
        ax.bar(labels, counts)
        plt.setp(ax.get_xticklabels(), rotation=30, ha="right")
    ax.set_ylabel("articles")
    ax.set_title(f"Label coverage: {report.percent_labeled:.1f}% of "
                 f"{report.articles_total} articles labeled")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
