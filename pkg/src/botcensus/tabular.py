"""Feature-channel classifiers: a random forest and discrete AdaBoost over
decision stumps, both producing two-way (human, bot) logits.

Trees use axis-aligned Gini splits with leaf class histograms; training is
deterministic under a fixed seed and input order. Split-gain ties break to
the lowest feature index, then the lowest threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, SingleClassError

# Leaf-frequency smoothing bound so logits stay finite for calibration.
LEAF_EPS = 1e-6


@dataclass
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 8
    feature_subsample: int | None = None  # None -> ceil(sqrt(n_features))
    seed: int = 0


@dataclass
class BoostConfig:
    rounds: int = 50
    seed: int = 0  # recorded for provenance; stump search is exhaustive


@dataclass
class DecisionTree:
    """Array-encoded binary tree. feature[i] == -1 marks a leaf; hist holds
    the class counts of the training points that reached each node."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    hist: np.ndarray  # (n_nodes, 2) training-label counts

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index for each row of X."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            internal = self.feature[node] >= 0
            if not internal.any():
                return node
            rows = np.flatnonzero(internal)
            cur = node[rows]
            go_left = X[rows, self.feature[cur]] <= self.threshold[cur]
            node[rows] = np.where(go_left, self.left[cur], self.right[cur])

    def leaf_proba(self, X: np.ndarray) -> np.ndarray:
        leaves = self.apply(X)
        h = self.hist[leaves].astype(np.float64)
        return h / h.sum(axis=1, keepdims=True)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "hist": self.hist.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "DecisionTree":
        return cls(
            feature=np.asarray(obj["feature"], dtype=np.int64),
            threshold=np.asarray(obj["threshold"], dtype=np.float64),
            left=np.asarray(obj["left"], dtype=np.int64),
            right=np.asarray(obj["right"], dtype=np.int64),
            hist=np.asarray(obj["hist"], dtype=np.int64),
        )


@dataclass
class ForestModel:
    trees: list[DecisionTree]
    config: ForestConfig
    n_features: int

    def to_dict(self) -> dict:
        return {
            "kind": "forest",
            "n_features": self.n_features,
            "config": vars(self.config),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ForestModel":
        return cls(
            trees=[DecisionTree.from_dict(t) for t in obj["trees"]],
            config=ForestConfig(**obj["config"]),
            n_features=obj["n_features"],
        )


@dataclass(frozen=True)
class Stump:
    """Depth-1 tree: predicts bot when polarity * (x[feature] - threshold) > 0."""

    feature: int
    threshold: float
    polarity: int  # +1 -> bot on the right side, -1 -> bot on the left

    def votes(self, X: np.ndarray) -> np.ndarray:
        """Signed votes in {-1, +1} (+1 = bot)."""
        side = np.where(X[:, self.feature] > self.threshold, 1, -1)
        return self.polarity * side


@dataclass
class BoostModel:
    stumps: list[tuple[Stump, float]] = field(default_factory=list)
    config: BoostConfig = field(default_factory=BoostConfig)
    n_features: int = 0

    def to_dict(self) -> dict:
        return {
            "kind": "adaboost",
            "n_features": self.n_features,
            "config": vars(self.config),
            "stumps": [
                {"feature": s.feature, "threshold": s.threshold,
                 "polarity": s.polarity, "weight": w}
                for s, w in self.stumps
            ],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "BoostModel":
        return cls(
            stumps=[
                (Stump(d["feature"], d["threshold"], d["polarity"]), d["weight"])
                for d in obj["stumps"]
            ],
            config=BoostConfig(**obj["config"]),
            n_features=obj["n_features"],
        )


def _check_training_inputs(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DimensionError(f"X {X.shape} and y {y.shape} do not align")
    if X.shape[0] < 2:
        raise DimensionError("training needs at least 2 samples")
    if np.unique(y).size < 2:
        raise SingleClassError("training labels contain a single class")
    return X, y


def best_split(
    X: np.ndarray, y: np.ndarray, feature_indices: np.ndarray | None = None
) -> tuple[int, float] | None:
    """Exhaustive Gini split search over the given features (default: all).

    Returns (feature, threshold) minimizing the weighted child impurity, or
    None when no feature admits a split. Invariant under uniform duplication
    of the training rows.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = y.shape[0]
    feats = (
        np.arange(X.shape[1])
        if feature_indices is None
        else np.sort(np.asarray(feature_indices))
    )
    best: tuple[float, int, float] | None = None
    for f in feats:
        xs = X[:, f]
        order = np.argsort(xs, kind="stable")
        xv = xs[order]
        boundaries = np.flatnonzero(xv[:-1] < xv[1:])
        if boundaries.size == 0:
            continue
        ones = np.cumsum(y[order])
        total1 = ones[-1]
        nl = (boundaries + 1).astype(np.float64)
        nr = n - nl
        l1 = ones[boundaries].astype(np.float64)
        l0 = nl - l1
        r1 = total1 - l1
        r0 = nr - r1
        # weighted Gini: sum over children of n_c * (1 - sum_k p_k^2)
        score = (nl - (l0 * l0 + l1 * l1) / nl + nr - (r0 * r0 + r1 * r1) / nr) / n
        b = int(np.argmin(score))
        if best is None or score[b] < best[0]:
            thr = (xv[boundaries[b]] + xv[boundaries[b] + 1]) / 2.0
            best = (float(score[b]), int(f), float(thr))
    if best is None:
        return None
    return best[1], best[2]


def _fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    max_depth: int,
    feature_subsample: int,
    rng: np.random.Generator,
) -> DecisionTree:
    n_features = X.shape[1]
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    hist: list[np.ndarray] = []

    def new_node(counts: np.ndarray) -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        hist.append(counts)
        return len(feature) - 1

    def build(idx: np.ndarray, depth: int) -> int:
        counts = np.bincount(y[idx], minlength=2)
        node = new_node(counts)
        if depth >= max_depth or counts[0] == 0 or counts[1] == 0 or idx.size < 2:
            return node
        cand = rng.choice(n_features, size=min(feature_subsample, n_features),
                          replace=False)
        split = best_split(X[idx], y[idx], cand)
        if split is None:
            return node
        f, thr = split
        mask = X[idx, f] <= thr
        feature[node] = f
        threshold[node] = thr
        left[node] = build(idx[mask], depth + 1)
        right[node] = build(idx[~mask], depth + 1)
        return node

    build(np.arange(X.shape[0]), 0)
    return DecisionTree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        hist=np.asarray(hist, dtype=np.int64),
    )


def train_forest(X: np.ndarray, y: np.ndarray, config: ForestConfig) -> ForestModel:
    """Bootstrap-sampled Gini forest; growth stops at max depth or pure node."""
    X, y = _check_training_inputs(X, y)
    n, d = X.shape
    subsample = config.feature_subsample or math.ceil(math.sqrt(d))
    trees = []
    for t in range(config.n_trees):
        rng = np.random.default_rng([config.seed, t])
        boot = rng.integers(0, n, size=n)
        trees.append(_fit_tree(X[boot], y[boot], config.max_depth, subsample, rng))
    return ForestModel(trees=trees, config=config, n_features=d)


def forest_proba(model: ForestModel, X: np.ndarray) -> np.ndarray:
    """Mean leaf class frequency across trees, clipped to [eps, 1 - eps]."""
    X = _check_predict_input(model.n_features, X)
    acc = np.zeros((X.shape[0], 2), dtype=np.float64)
    for tree in model.trees:
        acc += tree.leaf_proba(X)
    acc /= len(model.trees)
    return np.clip(acc, LEAF_EPS, 1.0 - LEAF_EPS)


def _best_stump(X: np.ndarray, y: np.ndarray, w: np.ndarray) -> tuple[Stump, float]:
    """Minimum weighted-error stump; ties break to the lowest feature index,
    then the lowest threshold, then polarity +1."""
    n, d = X.shape
    is_bot = y == 1
    total_bot = float(w[is_bot].sum())
    total_hum = float(w[~is_bot].sum())
    best: tuple[float, int, float, int] | None = None
    for f in range(d):
        xs = X[:, f]
        order = np.argsort(xs, kind="stable")
        xv = xs[order]
        boundaries = np.flatnonzero(xv[:-1] < xv[1:])
        if boundaries.size == 0:
            continue
        wb = np.cumsum(np.where(is_bot[order], w[order], 0.0))
        wh = np.cumsum(np.where(is_bot[order], 0.0, w[order]))
        # polarity +1: bot predicted on the right side of the threshold
        err_plus = wb[boundaries] + (total_hum - wh[boundaries])
        err_minus = (total_bot + total_hum) - err_plus
        bp = int(np.argmin(err_plus))
        bm = int(np.argmin(err_minus))
        if err_plus[bp] <= err_minus[bm]:
            cand = (float(err_plus[bp]), f, boundaries[bp], 1)
        else:
            cand = (float(err_minus[bm]), f, boundaries[bm], -1)
        if best is None or cand[0] < best[0]:
            thr = (xv[cand[2]] + xv[cand[2] + 1]) / 2.0
            best = (cand[0], cand[1], thr, cand[3])
    if best is None:
        # No feature separates any pair of rows: constant stump voting for
        # the weighted-majority class.
        majority_bot = total_bot >= total_hum
        stump = Stump(feature=0, threshold=-np.inf, polarity=1 if majority_bot else -1)
        return stump, float(min(total_bot, total_hum))
    err, f, thr, pol = best
    return Stump(feature=f, threshold=thr, polarity=pol), err


def train_adaboost(X: np.ndarray, y: np.ndarray, config: BoostConfig) -> BoostModel:
    """Discrete AdaBoost over decision stumps.

    Sample weights are renormalized every round; training stops early when
    the best stump's weighted error reaches 0 or >= 0.5 (always keeping at
    least one stump).
    """
    X, y = _check_training_inputs(X, y)
    n = X.shape[0]
    yb = np.where(y == 1, 1.0, -1.0)
    w = np.full(n, 1.0 / n)
    stumps: list[tuple[Stump, float]] = []
    for _ in range(config.rounds):
        stump, err = _best_stump(X, y, w)
        if err >= 0.5:
            if not stumps:
                stumps.append((stump, 0.0))
            break
        e = min(max(err, 1e-10), 1.0 - 1e-10)
        beta = 0.5 * math.log((1.0 - e) / e)
        stumps.append((stump, beta))
        if err <= 1e-12:
            break
        margin = yb * stump.votes(X)
        w = w * np.exp(-beta * margin)
        w = w / w.sum()
    return BoostModel(stumps=stumps, config=config, n_features=X.shape[1])


def boost_margin(model: BoostModel, X: np.ndarray) -> np.ndarray:
    """Stage-weight-normalized vote in [-1, 1] (positive = bot)."""
    X = _check_predict_input(model.n_features, X)
    total = sum(beta for _, beta in model.stumps)
    votes = np.zeros(X.shape[0], dtype=np.float64)
    for stump, beta in model.stumps:
        votes += beta * stump.votes(X)
    if total <= 0:
        return np.zeros(X.shape[0], dtype=np.float64)
    return votes / total


def _check_predict_input(n_features: int, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != n_features:
        raise DimensionError(
            f"expected {n_features} features, got shape {X.shape}"
        )
    return X


def predict_logits(model: ForestModel | BoostModel, X: np.ndarray) -> np.ndarray:
    """(n, 2) raw logits for downstream temperature calibration."""
    if isinstance(model, ForestModel):
        return np.log(forest_proba(model, X))
    margin = boost_margin(model, X)
    return np.stack([-margin, margin], axis=1)


def predict_tabular(model: ForestModel | BoostModel, x: np.ndarray) -> np.ndarray:
    """Logit pair (human, bot) for a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError(f"expected a single feature vector, got {x.shape}")
    return predict_logits(model, x[None, :])[0]
