"""Exact path-dependent TreeSHAP (polynomial-time recursion over unique paths)."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .forest import LEAF, RegressionForest, Tree


@numba.njit(cache=True)
def _extend(feat, zf, of, pw, off, depth, z, o, fi):
    feat[off + depth] = fi
    zf[off + depth] = z
    of[off + depth] = o
    pw[off + depth] = 1.0 if depth == 0 else 0.0
    for i in range(depth - 1, -1, -1):
        pw[off + i + 1] += o * pw[off + i] * (i + 1) / (depth + 1)
        pw[off + i] = z * pw[off + i] * (depth - i) / (depth + 1)


@numba.njit(cache=True)
def _unwind(feat, zf, of, pw, off, depth, k):
    o = of[off + k]
    z = zf[off + k]
    nxt = pw[off + depth]
    for i in range(depth - 1, -1, -1):
        if o != 0:
            tmp = pw[off + i]
            pw[off + i] = nxt * (depth + 1) / ((i + 1) * o)
            nxt = tmp - pw[off + i] * z * (depth - i) / (depth + 1)
        else:
            pw[off + i] = pw[off + i] * (depth + 1) / (z * (depth - i))
    for i in range(k, depth):
        feat[off + i] = feat[off + i + 1]
        zf[off + i] = zf[off + i + 1]
        of[off + i] = of[off + i + 1]


@numba.njit(cache=True)
def _unwound_sum(zf, of, pw, off, depth, k):
    o = of[off + k]
    z = zf[off + k]
    nxt = pw[off + depth]
    total = 0.0
    for i in range(depth - 1, -1, -1):
        if o != 0:
            tmp = nxt * (depth + 1) / ((i + 1) * o)
            total += tmp
            nxt = pw[off + i] - tmp * z * (depth - i) / (depth + 1)
        elif z != 0:
            total += (pw[off + i] / z) / ((depth - i) / (depth + 1))
    return total


# no disk cache for the recursive pair: numba reloads self-recursive
# functions from cache with a dangling dispatcher and segfaults
@numba.njit
def _recurse(feature, threshold, left, right, value, count, x, phi, feat, zf, of, pw, parent_off, node, depth, z, o, fi):
    off = parent_off + depth  # this level's copy of the path starts after the parent's
    for i in range(depth):
        feat[off + i] = feat[parent_off + i]
        zf[off + i] = zf[parent_off + i]
        of[off + i] = of[parent_off + i]
        pw[off + i] = pw[parent_off + i]
    _extend(feat, zf, of, pw, off, depth, z, o, fi)
    f = feature[node]
    if f == -1:
        for i in range(1, depth + 1):
            w = _unwound_sum(zf, of, pw, off, depth, i)
            phi[feat[off + i]] += w * (of[off + i] - zf[off + i]) * value[node]
        return 0
    v = x[f]
    if np.isnan(v) or v <= threshold[node]:
        hot, cold = left[node], right[node]
    else:
        hot, cold = right[node], left[node]
    iz = 1.0
    io = 1.0
    k = 0
    while k <= depth:
        if feat[off + k] == f:
            break
        k += 1
    if k != depth + 1:
        iz = zf[off + k]
        io = of[off + k]
        _unwind(feat, zf, of, pw, off, depth, k)
        depth -= 1
    _recurse(feature, threshold, left, right, value, count, x, phi, feat, zf, of, pw, off, hot, depth + 1, count[hot] / count[node] * iz, io, f)
    _recurse(feature, threshold, left, right, value, count, x, phi, feat, zf, of, pw, off, cold, depth + 1, count[cold] / count[node] * iz, 0.0, f)
    return 0


@numba.njit
def _tree_shap(feature, threshold, left, right, value, count, max_depth, X, phi):
    size = (max_depth + 2) * (max_depth + 3) // 2 + max_depth + 2
    feat = np.full(size, -2, np.int64)
    zf = np.zeros(size)
    of = np.zeros(size)
    pw = np.zeros(size)
    for r in range(X.shape[0]):
        _recurse(feature, threshold, left, right, value, count, X[r], phi[r], feat, zf, of, pw, 0, 0, 0, 1.0, 1.0, -1)


def tree_shap(tree: Tree, X: np.ndarray) -> np.ndarray:
    """(rows, features) Shapley values of one tree; the bias slot is dropped."""
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
    phi = np.zeros((len(X), X.shape[1] + 1))
    feature = np.where(tree.feature == LEAF, -1, tree.feature).astype(np.int64)
    # the root's "parent feature" is -1, which lands in the extra last column
    _tree_shap(feature, tree.threshold, tree.left, tree.right, tree.value, tree.count, tree.depth, X, phi)
    return phi[:, :-1]


@dataclass(frozen=True)
class ShapExplanation:
    base_value: float
    phi: np.ndarray
    prediction: float

    @property
    def residual(self) -> float:
        return float(self.base_value + self.phi.sum() - self.prediction)


def shap_values(forest: RegressionForest, X) -> list[ShapExplanation]:
    X = np.asarray(X, float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != forest.n_features:
        raise ValueError(f"expected {forest.n_features} columns, got {X.shape[1]}")
    phi = np.zeros(X.shape)
    for t in forest.trees:
        phi += tree_shap(t, X)
    phi /= len(forest.trees)
    base = float(np.mean([t.expected_value() for t in forest.trees]))
    pred = forest.predict(X)
    out = [ShapExplanation(base, phi[i], float(pred[i])) for i in range(len(X))]
    return out[0] if single else out
