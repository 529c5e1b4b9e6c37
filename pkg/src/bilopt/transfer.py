"""Native transfer-learner portfolio: adapt source-domain instances,
optionally guided by target-domain features, into a training set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .learners import Standardizer, UnsupportedChoiceError

MAHALANOBIS_RIDGE = 1e-6
MINKOWSKI_ORDER = 3  # fixed order for the "Min" metric

# transfer id -> whether target-domain features are consumed in training
NEEDS_TARGET = {
    "identity": False,
    "NNfilter": True,
    "TD": True,
    "PCAmining": True,
}

SUPPORTED_TRANSFERS = tuple(NEEDS_TARGET)


def needs_target(transfer_id: str) -> bool:
    if transfer_id not in NEEDS_TARGET:
        raise KeyError(f"unknown transfer learner {transfer_id!r}")
    return NEEDS_TARGET[transfer_id]


@dataclass(frozen=True)
class LinearMap:
    """Projection applied to later target queries (PCAmining)."""

    mean: np.ndarray
    std: np.ndarray
    components: np.ndarray  # (width, dime), orthonormal columns

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return ((X - self.mean) / self.std) @ self.components


@dataclass
class AdaptedData:
    X: np.ndarray
    y: np.ndarray
    feature_map: Optional[LinearMap] = None
    flags: tuple[str, ...] = ()


def _metric_fn(metric: str, source_Z: np.ndarray) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Distance from one query row to many rows, on standardized features."""
    if metric == "Euc":
        return lambda A, q: np.sqrt(((A - q) ** 2).sum(axis=1))
    if metric == "Man":
        return lambda A, q: np.abs(A - q).sum(axis=1)
    if metric == "Che":
        return lambda A, q: np.abs(A - q).max(axis=1)
    if metric == "Min":
        return lambda A, q: (np.abs(A - q) ** MINKOWSKI_ORDER).sum(axis=1) ** (
            1.0 / MINKOWSKI_ORDER
        )
    if metric == "Mah":
        cov = np.cov(source_Z, rowvar=False)
        cov = np.atleast_2d(cov)
        width = cov.shape[0]
        cov = cov + np.eye(width) * (MAHALANOBIS_RIDGE * np.trace(cov) / width)
        inv = np.linalg.inv(cov)
        return lambda A, q: np.sqrt(np.einsum("ij,jk,ik->i", A - q, inv, A - q))
    raise UnsupportedChoiceError(f"unknown metric {metric!r}")


def _dedup_indices(indices: list[int], X: np.ndarray) -> list[int]:
    """Drop later rows whose exact feature tuple already appeared."""
    seen: set[tuple] = set()
    out = []
    for i in indices:
        key = tuple(X[i])
        if key not in seen:
            seen.add(key)
            out.append(i)
    return out


def _nnfilter(config, source_X, source_y, target_X):
    scaler = Standardizer.fit(source_X)
    sz = scaler.transform(source_X)
    tz = scaler.transform(target_X)
    k = int(config["k"])
    flags: tuple[str, ...] = ()
    if k > len(source_X):
        k = len(source_X)
        flags = ("k_clamped",)
    dist = _metric_fn(config["metric"], sz)
    picked: list[int] = []
    for q in tz:
        d = dist(sz, q)
        picked.extend(np.argsort(d, kind="stable")[:k].tolist())
    idx = _dedup_indices(sorted(set(picked)), source_X)
    return AdaptedData(source_X[idx], source_y[idx], flags=flags)


def _td(config, source_X, source_y, target_X):
    strategy = config.get("strategy", "NN")
    if strategy != "NN":
        raise UnsupportedChoiceError(
            f"TD strategy {strategy!r} is not implemented natively; supported: NN"
        )
    scaler = Standardizer.fit(source_X)
    sz = scaler.transform(source_X)
    centroid = scaler.transform(target_X).mean(axis=0)
    k = int(config["k"])
    flags: tuple[str, ...] = ()
    if k > len(source_X):
        k = len(source_X)
        flags = ("k_clamped",)
    d = np.sqrt(((sz - centroid) ** 2).sum(axis=1))
    idx = np.sort(np.argsort(d, kind="stable")[:k])
    return AdaptedData(source_X[idx], source_y[idx], flags=flags)


def _pcamining(config, source_X, source_y, target_X):
    pooled = np.vstack([source_X, target_X])
    scaler = Standardizer.fit(pooled)
    width = pooled.shape[1]
    dime = int(config["dime"])
    flags: tuple[str, ...] = ()
    limit = min(width, pooled.shape[0])
    if dime > limit:
        dime = limit
        flags = ("dime_clamped",)
    Zp = scaler.transform(pooled)
    _, _, vt = np.linalg.svd(Zp, full_matrices=False)
    components = vt[:dime].T
    fmap = LinearMap(scaler.mean, scaler.std, components)
    return AdaptedData(fmap(source_X), source_y, feature_map=fmap, flags=flags)


def adapt(
    transfer_id: str,
    config: dict,
    source_X: np.ndarray,
    source_y: np.ndarray,
    target_X: Optional[np.ndarray],
    rng: np.random.Generator,
) -> AdaptedData:
    """Build a training set from source instances; target labels are never
    read. Deterministic given inputs and config."""
    source_X = np.asarray(source_X, dtype=float)
    source_y = np.asarray(source_y, dtype=int)
    if len(source_X) == 0:
        raise ValueError("source must be non-empty")
    if transfer_id == "identity":
        return AdaptedData(source_X.copy(), source_y.copy())
    if needs_target(transfer_id) and (target_X is None or len(target_X) == 0):
        raise ValueError(f"{transfer_id} requires target-domain instances")
    target_X = np.asarray(target_X, dtype=float)
    if transfer_id == "NNfilter":
        return _nnfilter(config, source_X, source_y, target_X)
    if transfer_id == "TD":
        return _td(config, source_X, source_y, target_X)
    if transfer_id == "PCAmining":
        return _pcamining(config, source_X, source_y, target_X)
    raise UnsupportedChoiceError(
        f"transfer learner {transfer_id!r} has no native implementation; "
        f"supported: {', '.join(SUPPORTED_TRANSFERS)}"
    )
