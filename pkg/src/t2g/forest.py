"""Regression forest grown from scratch: bootstrap, CART trees, OOB error, importances.

Trees split on the largest reduction of the sum of squared errors (variance
impurity). Thresholds are midpoints between consecutive distinct values and
a row goes left when ``x <= threshold``. Equal gains resolve to the lowest
feature index, then the lowest threshold.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

_LEAF = -1


@dataclass(frozen=True)
class ForestParams:
    n_estimators: int = 100
    max_depth: int = 10
    min_samples_split: int = 2
    min_weight_fraction_leaf: float = 0.0
    max_features: int | None = None  # features tried per split; None = all
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if not 0.0 <= self.min_weight_fraction_leaf <= 0.5:
            raise ValueError("min_weight_fraction_leaf must be in [0, 0.5]")
        if self.max_features is not None and self.max_features < 1:
            raise ValueError("max_features must be >= 1")

    def min_leaf(self, n_samples: int) -> int:
        return max(1, math.ceil(self.min_weight_fraction_leaf * n_samples - 1e-9))


@dataclass
class Tree:
    """Flat array tree; node 0 is the root, leaves have ``feature == -1``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray
    gain: np.ndarray  # SSE reduction of the split at each internal node
    n_features: int

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def is_leaf(self) -> bool:
        return self.feature[0] == _LEAF

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.feature[node] != _LEAF)
        while len(active):
            nd = node[active]
            go_left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] != _LEAF]
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def importances(self, n_root: int) -> np.ndarray:
        out = np.zeros(self.n_features)
        internal = self.feature != _LEAF
        np.add.at(out, self.feature[internal], self.gain[internal] / n_root)
        return out

    def to_dict(self, node: int = 0) -> dict:
        if self.feature[node] == _LEAF:
            return {"value": float(self.value[node]), "count": int(self.count[node])}
        return {
            "feature": int(self.feature[node]),
            "threshold": float(self.threshold[node]),
            "gain": float(self.gain[node]),
            "value": float(self.value[node]),
            "count": int(self.count[node]),
            "left": self.to_dict(int(self.left[node])),
            "right": self.to_dict(int(self.right[node])),
        }

    @classmethod
    def from_dict(cls, data: dict, n_features: int) -> "Tree":
        cols: dict[str, list] = {k: [] for k in ("feature", "threshold", "left", "right", "value", "count", "gain")}

        def add(d):
            i = len(cols["feature"])
            for k in cols:
                cols[k].append(0)
            cols["value"][i] = d["value"]
            cols["count"][i] = d["count"]
            if "feature" not in d:
                cols["feature"][i] = _LEAF
                cols["left"][i] = cols["right"][i] = _LEAF
                cols["threshold"][i] = 0.0
                cols["gain"][i] = 0.0
                return i
            cols["feature"][i] = d["feature"]
            cols["threshold"][i] = d["threshold"]
            cols["gain"][i] = d.get("gain", 0.0)
            cols["left"][i] = add(d["left"])
            cols["right"][i] = add(d["right"])
            return i

        add(data)
        return cls(
            np.array(cols["feature"], dtype=np.int64),
            np.array(cols["threshold"], dtype=float),
            np.array(cols["left"], dtype=np.int64),
            np.array(cols["right"], dtype=np.int64),
            np.array(cols["value"], dtype=float),
            np.array(cols["count"], dtype=np.int64),
            np.array(cols["gain"], dtype=float),
            n_features,
        )


def best_split(X: np.ndarray, y: np.ndarray, min_leaf: int = 1, features=None):
    """Best (feature, threshold, sse_gain) over the given rows, or None.

    ``features`` restricts the search (indices into the columns of X).
    """
    n = len(y)
    if n < 2 * min_leaf or n < 2:
        return None
    feats = np.arange(X.shape[1]) if features is None else np.asarray(features)
    yc = y - y.mean()
    sse = float(yc @ yc)
    if sse <= 0.0:
        return None
    Xf = X[:, feats]
    order = np.argsort(Xf, axis=0, kind="stable")
    xs = np.take_along_axis(Xf, order, axis=0)
    ys = yc[order]
    csum = np.cumsum(ys, axis=0)[:-1]
    csum2 = np.cumsum(ys * ys, axis=0)[:-1]
    total = csum[-1] + ys[-1]
    m = np.arange(1, n, dtype=float)[:, None]
    sse_left = csum2 - csum * csum / m
    sse_right = (sse - csum2) - (total - csum) ** 2 / (n - m)
    gain = sse - sse_left - sse_right
    valid = xs[1:] > xs[:-1]
    if min_leaf > 1:
        sizes = np.arange(1, n)
        valid &= ((sizes >= min_leaf) & (n - sizes >= min_leaf))[:, None]
    gain = np.where(valid, gain, -np.inf)
    # feature-major order so the first maximum is the lowest feature, lowest threshold
    flat = gain.T.ravel()
    best = flat.max()
    if not np.isfinite(best) or best <= 1e-12 * sse:
        return None
    pick = int(np.flatnonzero(flat >= best - 1e-10 * sse)[0])
    col, pos = divmod(pick, n - 1)
    lo, hi = xs[pos, col], xs[pos + 1, col]
    thr = (lo + hi) / 2.0
    if not lo <= thr < hi:
        thr = lo
    return int(feats[col]), float(thr), float(flat[pick])


def fit_tree(X, y, row_indices, params: ForestParams, seed=None) -> Tree:
    """Grow one CART regression tree on ``X[row_indices]`` (duplicates allowed)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    rows = np.asarray(row_indices, dtype=np.int64)
    if len(rows) == 0:
        raise ValueError("row_indices must be nonempty")
    rng = np.random.default_rng(seed)
    n_feat = X.shape[1]
    k = n_feat if params.max_features is None else min(params.max_features, n_feat)
    min_leaf = params.min_leaf(len(rows))

    feature, threshold, left, right, value, count, gain = ([] for _ in range(7))

    def new_node(idx):
        feature.append(_LEAF)
        threshold.append(0.0)
        left.append(_LEAF)
        right.append(_LEAF)
        value.append(float(y[idx].mean()))
        count.append(len(idx))
        gain.append(0.0)
        return len(feature) - 1

    root = new_node(rows)
    stack = [(root, rows, 0)]
    while stack:
        node, idx, depth = stack.pop()
        if depth >= params.max_depth or len(idx) < params.min_samples_split:
            continue
        feats = None if k == n_feat else np.sort(rng.choice(n_feat, size=k, replace=False))
        split = best_split(X[idx], y[idx], min_leaf, feats)
        if split is None:
            continue
        f, thr, g = split
        mask = X[idx, f] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node], gain[node] = f, thr, g
        left[node] = new_node(li)
        right[node] = new_node(ri)
        # right pushed first so the left subtree is numbered first
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))

    return Tree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=float),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=float),
        np.array(count, dtype=np.int64),
        np.array(gain, dtype=float),
        n_feat,
    )


@dataclass
class ForestModel:
    trees: list[Tree]
    params: ForestParams
    n_features: int
    n_train: int
    bootstrap_indices: list[np.ndarray] = field(default_factory=list, repr=False)
    oob_mae: float = float("nan")
    oob_mse: float = float("nan")
    oob_rows: int = 0
    feature_names: list[str] | None = None

    @property
    def oob_available(self) -> bool:
        return self.oob_rows > 0

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        return np.mean([t.predict(X) for t in self.trees], axis=0)

    def feature_importances(self) -> np.ndarray:
        return feature_importance(self)

    def to_dict(self) -> dict:
        return {
            "kind": "rf",
            "params": {
                "n_estimators": self.params.n_estimators,
                "max_depth": self.params.max_depth,
                "min_samples_split": self.params.min_samples_split,
                "min_weight_fraction_leaf": self.params.min_weight_fraction_leaf,
                "max_features": self.params.max_features,
                "bootstrap": self.params.bootstrap,
                "seed": self.params.seed,
            },
            "n_features": self.n_features,
            "n_train": self.n_train,
            "feature_names": self.feature_names,
            "oob_mae": None if math.isnan(self.oob_mae) else self.oob_mae,
            "oob_mse": None if math.isnan(self.oob_mse) else self.oob_mse,
            "oob_rows": self.oob_rows,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ForestModel":
        n_feat = int(data["n_features"])
        return cls(
            trees=[Tree.from_dict(t, n_feat) for t in data["trees"]],
            params=ForestParams(**data["params"]),
            n_features=n_feat,
            n_train=int(data["n_train"]),
            oob_mae=float("nan") if data.get("oob_mae") is None else data["oob_mae"],
            oob_mse=float("nan") if data.get("oob_mse") is None else data["oob_mse"],
            oob_rows=int(data.get("oob_rows", 0)),
            feature_names=data.get("feature_names"),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "ForestModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def rf_fit(X, y, params: ForestParams = ForestParams(), feature_names=None) -> ForestModel:
    """Fit ``n_estimators`` trees on bootstrap samples and score them out of bag.

    Each tree draws from its own child of ``SeedSequence(params.seed)``, so
    the forest does not depend on the order trees are grown in.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n < 2:
        raise ValueError("need at least 2 rows")
    if X.shape[0] != n:
        raise ValueError("X and y row counts differ")
    trees, boots = [], []
    oob_sum = np.zeros(n)
    oob_cnt = np.zeros(n, dtype=np.int64)
    for ss in np.random.SeedSequence(params.seed).spawn(params.n_estimators):
        rng = np.random.default_rng(ss)
        idx = rng.integers(0, n, size=n) if params.bootstrap else np.arange(n)
        tree = fit_tree(X, y, idx, params, rng)
        trees.append(tree)
        boots.append(idx)
        oob = np.ones(n, dtype=bool)
        oob[idx] = False
        if oob.any():
            oob_sum[oob] += tree.predict(X[oob])
            oob_cnt[oob] += 1
    model = ForestModel(trees, params, X.shape[1], n, boots,
                        feature_names=list(feature_names) if feature_names is not None else None)
    has = oob_cnt > 0
    if has.any():
        err = oob_sum[has] / oob_cnt[has] - y[has]
        model.oob_mae = float(np.mean(np.abs(err)))
        model.oob_mse = float(np.mean(err ** 2))
        model.oob_rows = int(has.sum())
    return model


def rf_predict(model: ForestModel, row) -> float | np.ndarray:
    """Mean of the trees' leaf values; a 1-D row gives a scalar."""
    arr = np.asarray(row, dtype=float)
    pred = model.predict(arr)
    return float(pred[0]) if arr.ndim == 1 else pred


def feature_importance(model: ForestModel) -> np.ndarray:
    """Impurity-decrease importances normalised to sum to 1.

    A forest of single leaves has no splits and yields a zero vector.
    """
    total = np.zeros(model.n_features)
    for t in model.trees:
        total += t.importances(int(t.count[0]))
    s = total.sum()
    return total / s if s > 0 else total
