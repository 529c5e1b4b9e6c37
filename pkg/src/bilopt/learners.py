"""Native classifier portfolio: Gaussian naive Bayes, logistic regression,
k-nearest neighbours, a CART decision tree, and bagged trees. All models
z-score features using training statistics and expose predict_proba for the
positive class.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

VARIANCE_FLOOR_SCALE = 1e-9
LR_MAX_ITER = 2000


class UnsupportedChoiceError(ValueError):
    """A hyper-parameter choice has no native implementation."""


class FeatureWidthError(ValueError):
    """Query feature width differs from the training width."""


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        return cls(mean, std)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.std


class TrainedModel:
    """Base: stores the z-scoring stats, checks query width, and flags."""

    classifier_id = "?"

    def __init__(self, scaler: Standardizer, flags: tuple[str, ...] = ()):
        self.scaler = scaler
        self.feature_width = scaler.mean.shape[0]
        self.flags = flags

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.feature_width:
            raise FeatureWidthError(
                f"expected width {self.feature_width}, got {X.shape[1]}"
            )
        return self._proba(self.scaler.transform(X))

    def _proba(self, Z: np.ndarray) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError


class PriorModel(TrainedModel):
    """Degenerate model for single-class training data: emits the prior."""

    def __init__(self, scaler, prior: float):
        super().__init__(scaler, flags=("single_class_training",))
        self.prior = float(prior)

    def _proba(self, Z):
        return np.full(Z.shape[0], self.prior)


class GaussianNBModel(TrainedModel):
    classifier_id = "NB"

    def __init__(self, scaler, means, variances, log_priors):
        super().__init__(scaler)
        self.means = means          # (2, width)
        self.variances = variances  # (2, width), floored
        self.log_priors = log_priors

    def _proba(self, Z):
        # log joint per class, summed over independent Gaussian features
        log_like = np.empty((Z.shape[0], 2))
        for c in (0, 1):
            diff = Z - self.means[c]
            log_like[:, c] = self.log_priors[c] - 0.5 * np.sum(
                np.log(2 * math.pi * self.variances[c])
                + diff * diff / self.variances[c],
                axis=1,
            )
        shift = log_like.max(axis=1, keepdims=True)
        w = np.exp(log_like - shift)
        return w[:, 1] / w.sum(axis=1)


def _train_gaussian_nb(config, Z, y, rng):
    if config.get("NBType", "gauss") != "gauss":
        raise UnsupportedChoiceError(
            f"NBType={config['NBType']!r} is not implemented natively; "
            "supported: gauss"
        )
    means = np.stack([Z[y == c].mean(axis=0) for c in (0, 1)])
    variances = np.stack([Z[y == c].var(axis=0) for c in (0, 1)])
    floor = VARIANCE_FLOOR_SCALE * max(float(Z.var(axis=0).max()), 1.0)
    variances = np.maximum(variances, floor)
    priors = np.array([(y == 0).mean(), (y == 1).mean()])
    return means, variances, np.log(priors)


def penalized_logistic_loss_and_grad(
    w: np.ndarray, X: np.ndarray, y: np.ndarray, penalty: str, lam: float
):
    """Mean logistic loss plus lam * penalty on the non-intercept weights.

    w[:-1] are feature weights, w[-1] the intercept. Returns (loss, grad);
    the L1 term contributes its subgradient sign(w).
    """
    n = X.shape[0]
    z = X @ w[:-1] + w[-1]
    # log(1 + exp(-m)) computed stably
    m = np.where(y == 1, z, -z)
    loss = float(np.mean(np.logaddexp(0.0, -m)))
    p = 1.0 / (1.0 + np.exp(-z))
    r = p - y
    grad = np.empty_like(w)
    grad[:-1] = X.T @ r / n
    grad[-1] = r.mean()
    if penalty == "L2":
        loss += lam * float(w[:-1] @ w[:-1])
        grad[:-1] += 2 * lam * w[:-1]
    else:
        loss += lam * float(np.abs(w[:-1]).sum())
        grad[:-1] += lam * np.sign(w[:-1])
    return loss, grad


class LogisticModel(TrainedModel):
    classifier_id = "LR"

    def __init__(self, scaler, weights, intercept):
        super().__init__(scaler)
        self.weights = weights
        self.intercept = intercept

    def _proba(self, Z):
        return 1.0 / (1.0 + np.exp(-(Z @ self.weights + self.intercept)))


def _train_logistic(config, Z, y, rng):
    penalty = config.get("penalty", "L2")
    fit_int = config.get("fit_int", "true") == "true"
    tol = float(config.get("tol", 1e-4))
    n = Z.shape[0]
    lam = 1.0 / n  # Table exposes no strength parameter; fixed weak penalty
    w = np.zeros(Z.shape[1] + 1)
    loss, grad = penalized_logistic_loss_and_grad(w, Z, y, penalty, lam)
    step = 1.0
    for _ in range(LR_MAX_ITER):
        if not fit_int:
            grad[-1] = 0.0
        gnorm = float(np.abs(grad).max())
        if gnorm < tol:
            break
        # backtracking line search on the descent direction
        direction = -grad
        while step > 1e-12:
            if penalty == "L1":
                # gradient step on smooth part, then soft-threshold
                w_new = w + step * direction
                w_new[:-1] = np.sign(w_new[:-1]) * np.maximum(
                    np.abs(w_new[:-1]) - step * lam, 0.0
                )
            else:
                w_new = w + step * direction
            loss_new, grad_new = penalized_logistic_loss_and_grad(
                w_new, Z, y, penalty, lam
            )
            if loss_new <= loss - 1e-4 * step * float(grad @ grad):
                break
            step *= 0.5
        else:
            break
        w, loss, grad = w_new, loss_new, grad_new
        step = min(step * 2.0, 1.0)
    if not fit_int:
        w[-1] = 0.0
    return w[:-1], float(w[-1])


class KnnModel(TrainedModel):
    classifier_id = "KNN"

    def __init__(self, scaler, Z, y, k, p):
        super().__init__(scaler)
        self.Z = Z
        self.y = y
        self.k = min(int(k), len(y))
        self.p = int(p)

    def _proba(self, Z):
        out = np.empty(Z.shape[0])
        for i, q in enumerate(Z):
            diff = np.abs(self.Z - q)
            if self.p == 1:
                d = diff.sum(axis=1)
            elif self.p == 2:
                d = np.sqrt((diff * diff).sum(axis=1))
            else:
                d = (diff ** self.p).sum(axis=1) ** (1.0 / self.p)
            idx = np.argsort(d, kind="stable")[: self.k]
            out[i] = self.y[idx].mean()
        return out


_NODE_FEATURE, _NODE_THRESHOLD, _NODE_LEFT, _NODE_RIGHT, _NODE_VALUE = range(5)


def _impurity_terms(pos: np.ndarray, tot: np.ndarray, criterion: str) -> np.ndarray:
    """tot * H(pos/tot) for gini or entropy, vectorized, 0*log0 = 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        q = pos / tot
        if criterion == "gini":
            h = 2 * q * (1 - q)
        else:
            h = -(
                np.where(q > 0, q * np.log2(q), 0.0)
                + np.where(q < 1, (1 - q) * np.log2(1 - q), 0.0)
            )
    return tot * np.where(tot > 0, h, 0.0)


class TreeNode:
    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, value, feature=-1, threshold=0.0, left=None, right=None):
        self.value = value
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right


def _best_split(Z, y, feat_idx, min_leaf, criterion):
    """Lowest-impurity valid split; ties broken by lowest feature index,
    then lowest threshold (guaranteed by scan order and strict <)."""
    n = len(y)
    best = None  # (impurity, feature, threshold)
    for j in feat_idx:
        order = np.argsort(Z[:, j], kind="stable")
        xs = Z[order, j]
        cum_pos = np.cumsum(y[order])
        cut = np.nonzero(xs[1:] > xs[:-1])[0]  # split between i and i+1
        if len(cut) == 0:
            continue
        left_n = cut + 1
        right_n = n - left_n
        ok = (left_n >= min_leaf) & (right_n >= min_leaf)
        if not ok.any():
            continue
        cut, left_n, right_n = cut[ok], left_n[ok], right_n[ok]
        left_pos = cum_pos[cut]
        right_pos = cum_pos[-1] - left_pos
        imp = (
            _impurity_terms(left_pos, left_n, criterion)
            + _impurity_terms(right_pos, right_n, criterion)
        ) / n
        i = int(np.argmin(imp))  # argmin returns the first (lowest threshold)
        if best is None or imp[i] < best[0]:
            best = (float(imp[i]), j, float((xs[cut[i]] + xs[cut[i] + 1]) / 2))
    return best


def _build_tree(Z, y, depth, params, rng):
    node_value = float(y.mean())
    n, width = Z.shape
    if (
        depth >= params["max_depth"]
        or n < params["min_split"]
        or node_value in (0.0, 1.0)
    ):
        return TreeNode(node_value)
    if params["n_features"] >= width:
        feat_idx = range(width)
    else:
        feat_idx = np.sort(rng.choice(width, size=params["n_features"], replace=False))
    split = _best_split(Z, y, feat_idx, params["min_leaf"], params["criterion"])
    if split is None:
        return TreeNode(node_value)
    _, j, thr = split
    mask = Z[:, j] <= thr
    return TreeNode(
        node_value,
        feature=j,
        threshold=thr,
        left=_build_tree(Z[mask], y[mask], depth + 1, params, rng),
        right=_build_tree(Z[~mask], y[~mask], depth + 1, params, rng),
    )


def _tree_predict(node: TreeNode, Z: np.ndarray) -> np.ndarray:
    out = np.empty(Z.shape[0])
    stack = [(node, np.arange(Z.shape[0]))]
    while stack:
        nd, idx = stack.pop()
        if nd.feature < 0:
            out[idx] = nd.value
            continue
        mask = Z[idx, nd.feature] <= nd.threshold
        stack.append((nd.left, idx[mask]))
        stack.append((nd.right, idx[~mask]))
    return out


def _n_split_features(splitter: str, width: int) -> int:
    if splitter == "sqrt":
        return max(1, int(math.sqrt(width)))
    if splitter == "log2":
        return max(1, int(math.log2(width))) if width > 1 else 1
    return width  # "auto": all features


class TreeModel(TrainedModel):
    classifier_id = "DT"

    def __init__(self, scaler, root):
        super().__init__(scaler)
        self.root = root

    def _proba(self, Z):
        return _tree_predict(self.root, Z)


def _train_tree(config, Z, y, rng):
    params = {
        "max_depth": int(config.get("max_e", 100)),
        "criterion": config.get("criterion", "gini"),
        "min_leaf": int(config.get("min_s_l", 1)),
        "min_split": max(2, int(config.get("min_a_p", 2))),
        "n_features": _n_split_features(config.get("splitter", "auto"), Z.shape[1]),
    }
    return _build_tree(Z, y, 0, params, rng)


class BaggingModel(TrainedModel):
    classifier_id = "Bagging"

    def __init__(self, scaler, members):
        super().__init__(scaler)
        self.members = members  # list of (column indices, tree root)

    def _proba(self, Z):
        probs = [_tree_predict(root, Z[:, cols]) for cols, root in self.members]
        return np.mean(probs, axis=0)


def _train_bagging(config, Z, y, rng):
    n, width = Z.shape
    n_est = int(config.get("n_est", 10))
    n_rows = max(1, int(round(float(config.get("max_s", 1.0)) * n)))
    n_cols = max(1, int(round(float(config.get("max_f", 1.0)) * width)))
    params = {
        "max_depth": 100,
        "criterion": "gini",
        "min_leaf": 1,
        "min_split": 2,
        "n_features": n_cols,  # column subsample applied per member below
    }
    members = []
    for _ in range(n_est):
        rows = rng.integers(0, n, size=n_rows)
        cols = np.sort(rng.choice(width, size=n_cols, replace=False))
        sub = dict(params, n_features=n_cols)
        root = _build_tree(Z[rows][:, cols], y[rows], 0, sub, rng)
        members.append((cols, root))
    return members


def train(
    classifier_id: str,
    config: dict,
    X: np.ndarray,
    y: np.ndarray,
    rng: np.random.Generator,
) -> TrainedModel:
    """Fit one of the native classifiers on a labeled table."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if len(y) == 0:
        raise ValueError("training data must be non-empty")
    scaler = Standardizer.fit(X)
    if len(np.unique(y)) < 2:
        return PriorModel(scaler, y.mean())
    Z = scaler.transform(X)
    if classifier_id == "NB":
        means, variances, log_priors = _train_gaussian_nb(config, Z, y, rng)
        return GaussianNBModel(scaler, means, variances, log_priors)
    if classifier_id == "LR":
        weights, intercept = _train_logistic(config, Z, y, rng)
        return LogisticModel(scaler, weights, intercept)
    if classifier_id == "KNN":
        return KnnModel(scaler, Z, y, config.get("n_neigh", 5), config.get("p", 2))
    if classifier_id == "DT":
        return TreeModel(scaler, _train_tree(config, Z, y, rng))
    if classifier_id == "Bagging":
        return BaggingModel(scaler, _train_bagging(config, Z, y, rng))
    raise UnsupportedChoiceError(
        f"classifier {classifier_id!r} has no native implementation; "
        "supported: NB, LR, KNN, DT, Bagging"
    )


SUPPORTED_CLASSIFIERS = ("NB", "LR", "KNN", "DT", "Bagging")
