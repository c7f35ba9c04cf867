"""Greedy CART regression trees, bootstrap-bagged forests and gradient boosting."""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

FORMAT_VERSION = 1
BOOSTING_TOLERANCE = 1e-12


@dataclass(frozen=True)
class TreeParams:
    max_depth: int | None = None  # None grows until leaves are pure
    min_samples_leaf: int = 1
    feature_subsample: int | None = None  # features tried per node; None = all


@dataclass
class RegressionTree:
    """Flat node arrays; ``feature == -1`` marks a leaf whose ``value`` is its label mean."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    width: int
    params: TreeParams = field(default_factory=TreeParams)

    @property
    def node_count(self) -> int:
        return len(self.feature)

    def parameter_count(self) -> int:
        internal = int(np.sum(self.feature >= 0))
        return 2 * internal + (self.node_count - internal)

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.width:
            raise ValueError(f"feature width {X.shape[1]} != {self.width}")
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            n = node[idx]
            go_left = X[idx, self.feature[n]] <= self.threshold[n]
            node[idx] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] >= 0
        return self.value[node]

    def to_json(self) -> dict:
        return {"feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(),
                "value": self.value.tolist(), "width": self.width}

    @classmethod
    def from_json(cls, obj) -> "RegressionTree":
        return cls(np.array(obj["feature"], dtype=np.int64), np.array(obj["threshold"], dtype=np.float64),
                   np.array(obj["left"], dtype=np.int64), np.array(obj["right"], dtype=np.int64),
                   np.array(obj["value"], dtype=np.float64), obj["width"])


def best_split(X: np.ndarray, y: np.ndarray, features, min_leaf: int = 1):
    """Best (gain, feature, threshold) by SSE reduction over midpoints; ties -> lowest feature, threshold.

    Gain is ``n_l * n_r / n * (mean_l - mean_r)**2``, which is exactly the SSE
    reduction and never negative.
    """
    n = len(y)
    best = (0.0, -1, 0.0)
    for f in sorted(features):
        order = np.argsort(X[:, f], kind="stable")
        xs, ys = X[order, f], y[order]
        boundary = np.flatnonzero(xs[1:] != xs[:-1])  # split after position i
        if boundary.size == 0:
            continue
        n_left = boundary + 1
        ok = (n_left >= min_leaf) & (n - n_left >= min_leaf)
        if not ok.any():
            continue
        n_left = n_left[ok]
        boundary = boundary[ok]
        csum = np.cumsum(ys)
        s_left = csum[boundary]
        n_right = n - n_left
        mean_l = s_left / n_left
        mean_r = (csum[-1] - s_left) / n_right
        gain = n_left * n_right / n * (mean_l - mean_r) ** 2
        i = int(np.argmax(gain))
        if gain[i] > best[0]:
            b = boundary[i]
            best = (float(gain[i]), f, float((xs[b] + xs[b + 1]) / 2.0))
    return best


def fit_tree(X, y, params: TreeParams = TreeParams(), seed: int = 0) -> RegressionTree:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(y) == 0:
        raise ValueError("cannot fit a tree on no data")
    width = X.shape[1]
    rng = np.random.default_rng(seed)
    k = width if params.feature_subsample is None else max(1, min(width, params.feature_subsample))
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        ys = y[idx]
        value[node] = float(ys.mean())
        if (params.max_depth is not None and depth >= params.max_depth) or len(idx) < 2 * params.min_samples_leaf:
            continue
        if np.all(ys == ys[0]):
            continue
        feats = range(width) if k == width else rng.choice(width, size=k, replace=False)
        gain, f, thr = best_split(X[idx], ys, feats, params.min_samples_leaf)
        if f < 0 or gain <= 0.0:
            continue
        go_left = X[idx, f] <= thr
        feature[node], threshold[node] = f, thr
        left[node], right[node] = new_node(), new_node()
        # right pushed first so the left subtree is expanded first
        stack.append((right[node], idx[~go_left], depth + 1))
        stack.append((left[node], idx[go_left], depth + 1))
    return RegressionTree(np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
                          np.array(right, dtype=np.int64), np.array(value), width, params)


@dataclass
class RandomForest:
    trees: list
    seeds: list
    width: int

    def predict(self, X) -> np.ndarray:
        return np.mean([t.predict(X) for t in self.trees], axis=0)

    def parameter_count(self) -> int:
        return sum(t.parameter_count() for t in self.trees)

    def to_json(self) -> dict:
        return {"format_version": FORMAT_VERSION, "kind": "forest", "seeds": self.seeds,
                "trees": [t.to_json() for t in self.trees]}


def _tree_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _fit_member(args):
    X, y, params, tree_seed, bootstrap = args
    if bootstrap:
        rows = np.random.default_rng(tree_seed).integers(0, len(y), size=len(y))
        X, y = X[rows], y[rows]
    return fit_tree(X, y, params, seed=tree_seed + 1)


def fit_forest(X, y, n_trees: int, params: TreeParams | None = None, seed: int = 0,
               bootstrap: bool = True, jobs: int = 1) -> RandomForest:
    """Each tree sees a size-N bootstrap resample drawn from its own derived seed."""
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if params is None:
        params = TreeParams(feature_subsample=math.ceil(math.sqrt(X.shape[1])))
    seeds = [_tree_seed(seed, i) for i in range(n_trees)]
    tasks = [(X, y, params, s, bootstrap) for s in seeds]
    if jobs > 1 and n_trees > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            trees = list(pool.map(_fit_member, tasks))
    else:
        trees = [_fit_member(t) for t in tasks]
    return RandomForest(trees, seeds, X.shape[1])


@dataclass
class BoostedEnsemble:
    initial: float
    trees: list
    shrinkage: float
    width: int
    train_mse: list = field(default_factory=list)

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.width:
            raise ValueError(f"feature width {X.shape[1]} != {self.width}")
        out = np.full(len(X), self.initial)
        for t in self.trees:
            out += self.shrinkage * t.predict(X)
        return out

    def parameter_count(self) -> int:
        return 2 + sum(t.parameter_count() for t in self.trees)

    def to_json(self) -> dict:
        return {"format_version": FORMAT_VERSION, "kind": "boosted", "initial": self.initial,
                "shrinkage": self.shrinkage, "trees": [t.to_json() for t in self.trees]}


def fit_boosted(X, y, n_trees: int, shrinkage: float, params: TreeParams = TreeParams(), seed: int = 0) -> BoostedEnsemble:
    """Stage m fits residuals of F_{m-1}; stops early once training MSE stops changing."""
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    if not 0.0 < shrinkage <= 1.0:
        raise ValueError("shrinkage must lie in (0, 1]")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    model = BoostedEnsemble(float(y.mean()), [], shrinkage, X.shape[1])
    current = np.full(len(y), model.initial)
    mse = float(np.mean((y - current) ** 2))
    model.train_mse.append(mse)
    for m in range(n_trees):
        tree = fit_tree(X, y - current, params, seed=_tree_seed(seed, m))
        current = current + shrinkage * tree.predict(X)
        model.trees.append(tree)
        new_mse = float(np.mean((y - current) ** 2))
        model.train_mse.append(new_mse)
        if abs(mse - new_mse) < BOOSTING_TOLERANCE:
            break
        mse = new_mse
    return model


def predict(model, X) -> np.ndarray:
    return model.predict(X)


def parameter_count(model) -> int:
    return model.parameter_count()


def save_model(model, path) -> None:
    with open(path, "w") as fh:
        json.dump(model.to_json(), fh)
        fh.write("\n")


def load_model(obj_or_path):
    if not isinstance(obj_or_path, dict):
        with open(obj_or_path) as fh:
            obj_or_path = json.load(fh)
    obj = obj_or_path
    if obj.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format {obj.get('format_version')}")
    trees = [RegressionTree.from_json(t) for t in obj["trees"]]
    width = trees[0].width
    if obj["kind"] == "forest":
        return RandomForest(trees, obj["seeds"], width)
    if obj["kind"] == "boosted":
        return BoostedEnsemble(obj["initial"], trees, obj["shrinkage"], width)
    raise ValueError(f"unknown ensemble kind {obj['kind']!r}")
