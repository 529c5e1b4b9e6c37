"""Figure rendering for comparison reports. All charts are written as
self-contained SVG files; no display is required."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def rank_bar_chart(ranks: dict[str, int], path: str | Path, title: str = "") -> None:
    """Bar chart of Scott-Knott ranks (larger = better)."""
    names = sorted(ranks, key=lambda n: (ranks[n], n))
    values = [ranks[n] for n in names]
    fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(names)), 3.2))
    ax.bar(range(len(names)), values, color="#4878a8")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylabel("rank (larger = better)")
    ax.set_yticks(range(0, max(values) + 2))
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def mean_auc_chart(
    means: dict[str, dict[str, float]], path: str | Path, title: str = ""
) -> None:
    """Grouped bars: mean AUC per project per technique."""
    projects = sorted({p for tech in means.values() for p in tech})
    techniques = sorted(means)
    width = 0.8 / max(len(techniques), 1)
    fig, ax = plt.subplots(figsize=(max(5, 1.5 * len(projects)), 3.2))
    for i, tech in enumerate(techniques):
        xs = [j + i * width for j in range(len(projects))]
        ys = [means[tech].get(p, 0.0) for p in projects]
        ax.bar(xs, ys, width=width, label=tech)
    ax.set_xticks([j + 0.4 - width / 2 for j in range(len(projects))])
    ax.set_xticklabels(projects)
    ax.set_ylabel("mean AUC")
    ax.set_ylim(0, 1)
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
