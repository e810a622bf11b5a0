"""CART regression trees and random forests with always-left missing routing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEAF = -1


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 200
    max_depth: int | None = None
    min_leaf: int = 2
    max_features: float = 1 / 3
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_trees < 1 or self.min_leaf < 1:
            raise ValueError("n_trees and min_leaf must be at least 1")
        if not 0 < self.max_features <= 1:
            raise ValueError("max_features must be in (0, 1]")


@dataclass(frozen=True, eq=False)
class Tree:
    """Flat arrays; node 0 is the root, leaves have feature == LEAF."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray  # training samples reaching the node (bootstrap multiplicity included)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        d = np.zeros(self.n_nodes, int)
        for i in range(self.n_nodes):
            if self.feature[i] != LEAF:
                d[self.left[i]] = d[self.right[i]] = d[i] + 1
        return int(d.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        node = np.zeros(len(X), int)
        active = self.feature[node] != LEAF
        while active.any():
            n = node[active]
            f = self.feature[n]
            v = X[active, f]
            go_left = np.isnan(v) | (v <= self.threshold[n])
            node[active] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] != LEAF
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def expected_value(self) -> float:
        leaves = self.feature == LEAF
        return float((self.value[leaves] * self.count[leaves]).sum() / self.count[0])


def _best_split(x: np.ndarray, y: np.ndarray, min_leaf: int):
    """Best (gain, threshold) on one column; NaN rows always join the left side."""
    nan = np.isnan(x)
    n = len(y)
    y_nan = y[nan]
    xs, ys = x[~nan], y[~nan]
    order = np.argsort(xs, kind="stable")
    xs, ys = xs[order], ys[order]
    k_nan = len(y_nan)
    s_nan = y_nan.sum()
    q_nan = (y_nan**2).sum()
    cs = np.concatenate([[0.0], np.cumsum(ys)])
    cq = np.concatenate([[0.0], np.cumsum(ys**2)])
    tot, totq = cs[-1] + s_nan, cq[-1] + q_nan
    parent_sse = totq - tot * tot / n
    # candidate k = number of non-missing rows sent left (0 = missing only)
    k = np.arange(0 if k_nan else 1, len(xs))
    if len(k) == 0:
        return None
    valid = np.ones(len(k), bool)
    inner = k > 0
    valid[inner] = xs[k[inner]] > xs[k[inner] - 1]
    nl = k + k_nan
    nr = n - nl
    valid &= (nl >= min_leaf) & (nr >= min_leaf)
    if not valid.any():
        return None
    sl = cs[k] + s_nan
    ql = cq[k] + q_nan
    sr, qr = tot - sl, totq - ql
    with np.errstate(divide="ignore", invalid="ignore"):
        sse = (ql - sl * sl / nl) + (qr - sr * sr / nr)
    gain = np.where(valid, parent_sse - sse, -np.inf)
    j = int(np.argmax(gain))
    if gain[j] <= 1e-12 * max(1.0, abs(parent_sse)):
        return None
    kk = k[j]
    thr = -np.inf if kk == 0 else 0.5 * (xs[kk - 1] + xs[kk])
    if kk > 0 and thr >= xs[kk]:  # midpoint rounding between adjacent floats
        thr = xs[kk - 1]
    return float(gain[j]), float(thr)


def fit_tree(X, y, cfg: ForestConfig, rng: np.random.Generator) -> Tree:
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    n, m = X.shape
    mtry = max(1, int(cfg.max_features * m))
    feature, threshold, left, right, value, count = [], [], [], [], [], []

    def new_node(idx):
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        value.append(float(y[idx].mean()))
        count.append(float(len(idx)))
        return len(feature) - 1

    stack = [(new_node(np.arange(n)), np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if len(idx) < 2 * cfg.min_leaf or (cfg.max_depth is not None and depth >= cfg.max_depth):
            continue
        yi = y[idx]
        if np.ptp(yi) == 0:
            continue
        best = None
        # sample mtry features; keep drawing past mtry only while nothing splits
        for t, f in enumerate(rng.permutation(m)):
            if t >= mtry and best is not None:
                break
            r = _best_split(X[idx, f], yi, cfg.min_leaf)
            if r is not None and (best is None or r[0] > best[0]):
                best = (r[0], r[1], int(f))
        if best is None:
            continue
        _, thr, f = best
        v = X[idx, f]
        go_left = np.isnan(v) | (v <= thr)
        li, ri = idx[go_left], idx[~go_left]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return Tree(
        np.array(feature, np.int64),
        np.array(threshold, float),
        np.array(left, np.int64),
        np.array(right, np.int64),
        np.array(value, float),
        np.array(count, float),
    )


@dataclass(frozen=True, eq=False)
class RegressionForest:
    trees: tuple
    n_features: int
    config: ForestConfig

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} columns, got {X.shape[1]}")
        out = np.mean([t.predict(X) for t in self.trees], axis=0)
        return out[0] if single else out


def fit_forest(X, y, config: ForestConfig = ForestConfig(), seed: int = 0) -> RegressionForest:
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("empty dataset")
    if len(X) != len(y):
        raise ValueError("X and y row counts differ")
    if len(X) < 2:
        raise ValueError("need at least 2 rows")
    trees = []
    for ss in np.random.SeedSequence(seed).spawn(config.n_trees):
        rng = np.random.default_rng(ss)
        idx = rng.integers(0, len(X), len(X)) if config.bootstrap else np.arange(len(X))
        idx = np.sort(idx)
        trees.append(fit_tree(X[idx], y[idx], config, rng))
    return RegressionForest(tuple(trees), X.shape[1], config)
