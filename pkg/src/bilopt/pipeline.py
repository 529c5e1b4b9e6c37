"""CPDP task assembly: dataset ingestion, target/source splits, the AUC
objective, and end-to-end evaluation of one (combination, configuration).
"""

from __future__ import annotations

import csv
import hashlib
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import learners, transfer
from .space import Combination

DEFAULT_HOLDOUT_FRACTION = 0.10
FAILED_OBJECTIVE = float("-inf")


class DataFormatError(ValueError):
    """A project CSV violates the ingestion contract."""


class UndefinedAucError(ValueError):
    """AUC is undefined for single-class labels."""


def derive_seed(master: int, *tags) -> int:
    """Stable seed derivation so parallel and sequential schedules draw
    identical randomness."""
    h = hashlib.blake2b(repr((int(master), tags)).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class Dataset:
    name: str
    X: np.ndarray
    y: np.ndarray

    def __len__(self) -> int:
        return len(self.y)


def load_project_csv(path: str | Path) -> Dataset:
    """One project per CSV: header row, numeric feature columns, final
    column named 'label' with values in {0,1}. Files with missing cells or
    duplicate rows are rejected."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataFormatError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    if not header or header[-1] != "label":
        raise DataFormatError(f"{path}: final column must be named 'label'")
    if not body:
        raise DataFormatError(f"{path}: no data rows")
    width = len(header)
    X = np.empty((len(body), width - 1))
    y = np.empty(len(body), dtype=int)
    seen: set[tuple] = set()
    for i, row in enumerate(body):
        if len(row) != width or any(cell.strip() == "" for cell in row):
            raise DataFormatError(f"{path}: row {i + 2} has missing cells")
        key = tuple(row)
        if key in seen:
            raise DataFormatError(f"{path}: row {i + 2} is a duplicate")
        seen.add(key)
        try:
            X[i] = [float(v) for v in row[:-1]]
        except ValueError as exc:
            raise DataFormatError(f"{path}: row {i + 2}: {exc}") from exc
        if row[-1] not in ("0", "1"):
            raise DataFormatError(f"{path}: row {i + 2}: label must be 0 or 1")
        y[i] = int(row[-1])
    return Dataset(path.stem, X, y)


def load_dataset_dir(directory: str | Path) -> list[Dataset]:
    paths = sorted(Path(directory).glob("*.csv"))
    if not paths:
        raise DataFormatError(f"{directory}: no CSV project files found")
    datasets = [load_project_csv(p) for p in paths]
    widths = {d.X.shape[1] for d in datasets}
    if len(widths) != 1:
        raise DataFormatError(f"{directory}: inconsistent feature widths {widths}")
    return datasets


@dataclass(frozen=True)
class CpdpTask:
    """One CPDP task: a target project plus all remaining projects pooled
    as the source domain."""

    target_name: str
    target_X: np.ndarray
    target_y: np.ndarray
    source_X: np.ndarray
    source_y: np.ndarray
    holdout_fraction: float = DEFAULT_HOLDOUT_FRACTION
    seed: int = 0


def make_task(
    datasets: list[Dataset],
    target_name: str,
    holdout_fraction: float = DEFAULT_HOLDOUT_FRACTION,
    seed: int = 0,
) -> CpdpTask:
    names = [d.name for d in datasets]
    if target_name not in names:
        raise KeyError(f"target {target_name!r} not among projects {names}")
    if len(datasets) < 2:
        raise ValueError("a CPDP task needs at least two projects")
    if not 0 < holdout_fraction < 1:
        raise ValueError("holdout_fraction must be in (0, 1)")
    target = next(d for d in datasets if d.name == target_name)
    rest = [d for d in datasets if d.name != target_name]
    return CpdpTask(
        target_name=target_name,
        target_X=target.X,
        target_y=target.y,
        source_X=np.vstack([d.X for d in rest]),
        source_y=np.concatenate([d.y for d in rest]),
        holdout_fraction=holdout_fraction,
        seed=seed,
    )


@dataclass(frozen=True)
class TrainView:
    source_X: np.ndarray
    source_y: np.ndarray
    target_X: Optional[np.ndarray]  # features only; labels never exposed
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class TestView:
    X: np.ndarray
    y: np.ndarray


def _stratified_holdout(task: CpdpTask) -> tuple[np.ndarray, tuple[str, ...]]:
    """Indices of the holdout slice of the target; stratified by label when
    both classes are present, otherwise unstratified and flagged."""
    rng = np.random.default_rng(derive_seed(task.seed, "split", task.target_name))
    y = task.target_y
    n = len(y)
    if (y == 0).sum() >= 1 and (y == 1).sum() >= 1:
        parts = []
        for c in (0, 1):
            idx = np.nonzero(y == c)[0]
            take = int(round(task.holdout_fraction * len(idx)))
            parts.append(rng.permutation(idx)[:take])
        return np.sort(np.concatenate(parts)), ()
    take = int(round(task.holdout_fraction * n))
    return np.sort(rng.permutation(n)[:take]), ("unstratified_split",)


def split_task(task: CpdpTask, transfer_id: str) -> tuple[TrainView, TestView]:
    """Target-domain split per the transfer learner's needs: 10% holdout
    (with 90% of target features available to training) when the learner
    consumes target data, otherwise the whole target is the test set."""
    if not transfer.needs_target(transfer_id):
        return (
            TrainView(task.source_X, task.source_y, None),
            TestView(task.target_X, task.target_y),
        )
    hold, flags = _stratified_holdout(task)
    mask = np.zeros(len(task.target_y), dtype=bool)
    mask[hold] = True
    return (
        TrainView(task.source_X, task.source_y, task.target_X[~mask], flags),
        TestView(task.target_X[mask], task.target_y[mask]),
    )


def auc(scores, labels) -> float:
    """Area under the ROC curve via average ranks; score ties get half
    credit (Mann-Whitney convention)."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAucError("AUC needs at least one label of each class")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1  # average rank, 1-based
        i = j + 1
    pos_rank_sum = float(ranks[labels == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)


@dataclass(frozen=True)
class EvaluationResult:
    training_auc: float
    holdout_auc: Optional[float]
    adapt_time: float
    train_time: float
    score_time: float
    n_train: int
    flags: tuple[str, ...] = ()

    @property
    def failed(self) -> bool:
        return "failed" in self.flags


def evaluate(
    train_view: TrainView,
    x_u: Combination,
    x_l: dict,
    seed: int,
) -> EvaluationResult:
    """adapt -> train -> score the adapted training set. Never raises:
    failures are recorded with objective -inf, single-class training sets
    substitute AUC 0.5 with a flag."""
    flags: list[str] = []
    t0 = time.perf_counter()
    try:
        rng = np.random.default_rng(derive_seed(seed, "adapt"))
        adapted = transfer.adapt(
            x_u.transfer_id, x_l, train_view.source_X, train_view.source_y,
            train_view.target_X, rng,
        )
        flags.extend(adapted.flags)
        t1 = time.perf_counter()
        rng = np.random.default_rng(derive_seed(seed, "train"))
        model = learners.train(x_u.classifier_id, x_l, adapted.X, adapted.y, rng)
        flags.extend(model.flags)
        t2 = time.perf_counter()
        scores = model.predict_proba(adapted.X)
        try:
            training_auc = auc(scores, adapted.y)
        except UndefinedAucError:
            training_auc = 0.5
            flags.append("single_class_substituted")
        t3 = time.perf_counter()
        return EvaluationResult(
            training_auc=training_auc,
            holdout_auc=None,
            adapt_time=t1 - t0,
            train_time=t2 - t1,
            score_time=t3 - t2,
            n_train=len(adapted.y),
            flags=tuple(flags),
        )
    except Exception as exc:
        flags += ["failed", f"error:{type(exc).__name__}"]
        return EvaluationResult(
            training_auc=FAILED_OBJECTIVE,
            holdout_auc=None,
            adapt_time=time.perf_counter() - t0,
            train_time=0.0,
            score_time=0.0,
            n_train=0,
            flags=tuple(flags),
        )


def validate_holdout(
    train_view: TrainView,
    test_view: TestView,
    x_u: Combination,
    x_l: dict,
    seed: int,
) -> tuple[float, EvaluationResult]:
    """Retrain on the full train view and score the holdout once. Used only
    after optimization, never inside the search."""
    rng = np.random.default_rng(derive_seed(seed, "adapt"))
    adapted = transfer.adapt(
        x_u.transfer_id, x_l, train_view.source_X, train_view.source_y,
        train_view.target_X, rng,
    )
    rng = np.random.default_rng(derive_seed(seed, "train"))
    model = learners.train(x_u.classifier_id, x_l, adapted.X, adapted.y, rng)
    queries = test_view.X
    if adapted.feature_map is not None:
        queries = adapted.feature_map(queries)
    scores = model.predict_proba(queries)
    holdout = auc(scores, test_view.y)
    result = evaluate(train_view, x_u, x_l, seed)
    return holdout, result


def holdout_disjoint(
    train_view: TrainView, test_view: TestView, x_u: Combination, x_l: dict, seed: int
) -> bool:
    """Audit: no holdout instance appears (by exact feature tuple) in the
    adapted training set."""
    rng = np.random.default_rng(derive_seed(seed, "adapt"))
    adapted = transfer.adapt(
        x_u.transfer_id, x_l, train_view.source_X, train_view.source_y,
        train_view.target_X, rng,
    )
    if adapted.feature_map is not None:
        test_rows = {tuple(row) for row in adapted.feature_map(test_view.X)}
    else:
        test_rows = {tuple(row) for row in test_view.X}
    return all(tuple(row) not in test_rows for row in adapted.X)
