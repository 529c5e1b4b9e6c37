"""Statistical comparison of techniques across repeated runs: Wilcoxon
signed-rank test (exact for small n, normal approximation beyond), the
Vargha-Delaney A12 effect size, and Scott-Knott clustering into ranks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

EXACT_LIMIT = 20          # exact signed-rank distribution up to this n
ALPHA = 0.05              # split-acceptance significance level
A12_SMALL_EFFECT = 0.56   # minimum effect size to accept a split


@dataclass(frozen=True)
class SampleSet:
    technique: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class RankTable:
    ranks: dict[str, int]           # technique -> rank, larger = better
    clusters: list[list[str]]       # ordered worst to best


def _signed_ranks(diffs: np.ndarray) -> np.ndarray:
    """Average ranks of |d|, doubled so tied ranks stay integral."""
    a = np.abs(diffs)
    order = np.argsort(a, kind="stable")
    ranks2 = np.empty(len(a), dtype=int)
    i = 0
    while i < len(a):
        j = i
        while j + 1 < len(a) and a[order[j + 1]] == a[order[i]]:
            j += 1
        ranks2[order[i : j + 1]] = i + j + 2  # 2 * average 1-based rank
        i = j + 1
    return ranks2


def _exact_two_sided(ranks2: np.ndarray, w_obs2: int) -> float:
    """P(|W - mu| >= |w_obs - mu|) over all 2^n sign assignments, computed
    by convolving the rank distribution."""
    total = int(ranks2.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in ranks2:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: len(counts) - r]
        counts = counts + shifted
    mu2 = total / 2
    dev = abs(w_obs2 - mu2)
    sums = np.arange(total + 1)
    return float(counts[np.abs(sums - mu2) >= dev - 1e-9].sum() / counts.sum())


def wilcoxon_signed_rank(a, b) -> float:
    """Two-sided paired Wilcoxon signed-rank p-value. Zero differences are
    dropped (standard convention); all-zero pairs give p = 1.0."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) != len(b):
        raise ValueError("paired samples must have equal length")
    diffs = a - b
    diffs = diffs[diffs != 0]
    n = len(diffs)
    if n == 0:
        return 1.0
    ranks2 = _signed_ranks(diffs)
    w_pos2 = int(ranks2[diffs > 0].sum())
    if n <= EXACT_LIMIT:
        return _exact_two_sided(ranks2, w_pos2)
    # normal approximation with continuity and tie correction
    w_pos = w_pos2 / 2
    mu = n * (n + 1) / 4
    _, counts = np.unique(ranks2, return_counts=True)
    tie_term = float(sum(t**3 - t for t in counts)) / 48
    sigma = math.sqrt(n * (n + 1) * (2 * n + 1) / 24 - tie_term)
    if sigma == 0:
        return 1.0
    z = (abs(w_pos - mu) - 0.5) / sigma
    return max(min(math.erfc(z / math.sqrt(2)), 1.0), 0.0)


def a12(a, b) -> float:
    """Probability a random draw from a exceeds one from b, ties at half
    credit."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("both samples must be non-empty")
    wins = (a[:, None] > b[None, :]).sum()
    ties = (a[:, None] == b[None, :]).sum()
    return float((wins + 0.5 * ties) / (len(a) * len(b)))


def _between_ss(means: np.ndarray, sizes: np.ndarray, split: int) -> float:
    grand = float(np.average(means, weights=sizes))
    m1 = float(np.average(means[:split], weights=sizes[:split]))
    m2 = float(np.average(means[split:], weights=sizes[split:]))
    return sizes[:split].sum() * (m1 - grand) ** 2 + sizes[split:].sum() * (
        m2 - grand
    ) ** 2


def _split_ok(lower: SampleSet, upper: SampleSet) -> bool:
    """Gate on the boundary pair: Wilcoxon p < ALPHA and the better side's
    effect size at least A12_SMALL_EFFECT."""
    p = wilcoxon_signed_rank(upper.values, lower.values)
    effect = a12(upper.values, lower.values)
    return p < ALPHA and max(effect, 1.0 - effect) >= A12_SMALL_EFFECT


def _recurse(group: list[SampleSet], out: list[list[SampleSet]]) -> None:
    if len(group) < 2:
        out.append(group)
        return
    means = np.array([float(np.mean(s.values)) for s in group])
    sizes = np.array([len(s.values) for s in group], dtype=float)
    best_split, best_ss = None, -1.0
    for k in range(1, len(group)):
        ss = _between_ss(means, sizes, k)
        if ss > best_ss:
            best_split, best_ss = k, ss
    if best_ss <= 0 or not _split_ok(group[best_split - 1], group[best_split]):
        out.append(group)
        return
    _recurse(group[:best_split], out)
    _recurse(group[best_split:], out)


def scott_knott(samples: list[SampleSet]) -> RankTable:
    """Order techniques by mean, recursively split at the boundary
    maximizing between-cluster sum of squares, accept a split only if the
    adjacent techniques differ significantly with at least a small effect.
    Ranks 1..k are assigned bottom-up by cluster mean."""
    if not samples:
        raise ValueError("need at least one technique")
    for s in samples:
        if len(s.values) < 2:
            raise ValueError(f"{s.technique}: need at least 2 repeats")
    ordered = sorted(
        samples, key=lambda s: (float(np.mean(s.values)), s.technique)
    )
    clusters: list[list[SampleSet]] = []
    _recurse(ordered, clusters)
    ranks: dict[str, int] = {}
    names: list[list[str]] = []
    for rank, cluster in enumerate(clusters, start=1):
        names.append([s.technique for s in cluster])
        for s in cluster:
            ranks[s.technique] = rank
    return RankTable(ranks=ranks, clusters=names)
