"""Independent reference implementations used only by the tests."""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import lsq_linear

from handforge.surrogate.forest import LEAF


# ---------------------------------------------------------------- wrench LP


def _edge_matrix(contacts, m, rho):
    """Cone edges built from scratch (normal + mu * unit tangent ring)."""
    cols, blocks = [], []
    for c in contacts:
        n = np.asarray(c.normal, float)
        t1 = np.asarray(c.tangent, float)
        t1 = t1 - (t1 @ n) * n
        t1 /= np.linalg.norm(t1)
        t2 = np.cross(n, t1)
        p = np.asarray(c.point, float) / rho
        for k in range(m):
            th = 2 * math.pi * k / m
            d = n + c.mu * (math.cos(th) * t1 + math.sin(th) * t2)
            cols.append(np.concatenate([d, np.cross(p, d)]))
        blocks.append(m)
    return np.array(cols).T, blocks


def feasible(contacts, w_hat, alpha, m=8, rho=100.0, tol=1e-9):
    """Non-negative least-squares check that some admissible forces balance -alpha * w_hat."""
    G, blocks = _edge_matrix(contacts, m, rho)
    nc = len(contacts)
    nv = G.shape[1]
    A = np.zeros((nc, nv))
    s = 0
    for i, b in enumerate(blocks):
        A[i, s : s + b] = 1.0
        s += b
    caps = np.array([c.cap for c in contacts])
    M = np.block([[G, np.zeros((6, nc))], [A, np.eye(nc)]])
    rhs = np.concatenate([-alpha * np.asarray(w_hat, float), caps])
    # bounded-variable least squares; the residual is recomputed here rather
    # than trusted from the solver
    sol = lsq_linear(M, rhs, bounds=(0.0, np.inf), method="bvls", tol=1e-13)
    res = np.linalg.norm(M @ sol.x - rhs)
    return res <= tol * max(1.0, np.linalg.norm(rhs))


def resist_oracle(contacts, w_hat, m=8, rho=100.0, rel=1e-7):
    if not contacts:
        return 0.0
    hi = sum(c.cap * math.sqrt(1 + c.mu**2) * (1 + np.linalg.norm(c.point) / rho) for c in contacts) + 1.0
    if not feasible(contacts, w_hat, 1e-9 * hi, m, rho):
        return 0.0
    lo = 0.0
    while hi - lo > rel * hi:
        mid = 0.5 * (lo + hi)
        if feasible(contacts, w_hat, mid, m, rho):
            lo = mid
        else:
            hi = mid
    return lo


# ---------------------------------------------------------------- Shapley


def conditional_expectation(tree, x, S) -> float:
    """E[f(x) | x_S] with unobserved splits averaged by training counts."""

    def rec(n):
        f = tree.feature[n]
        if f == LEAF:
            return tree.value[n]
        l, r = tree.left[n], tree.right[n]
        if f in S:
            v = x[f]
            return rec(l if (np.isnan(v) or v <= tree.threshold[n]) else r)
        return (tree.count[l] * rec(l) + tree.count[r] * rec(r)) / tree.count[n]

    return rec(0)


def brute_shapley(tree, x) -> np.ndarray:
    M = len(x)
    phi = np.zeros(M)
    for i in range(M):
        others = [j for j in range(M) if j != i]
        for k in range(M):
            w = math.factorial(k) * math.factorial(M - k - 1) / math.factorial(M)
            for S in itertools.combinations(others, k):
                S = set(S)
                phi[i] += w * (conditional_expectation(tree, x, S | {i}) - conditional_expectation(tree, x, S))
    return phi


def brute_forest_shapley(forest, x) -> np.ndarray:
    return np.mean([brute_shapley(t, x) for t in forest.trees], axis=0)


# ---------------------------------------------------------------- geometry


def point_in_polygon(poly, p) -> bool:
    """Even-odd ray casting."""
    x, y = p
    inside = False
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            xi = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if xi > x:
                inside = not inside
    return inside


def sdf_oracle(tool, p):
    """Primitive-by-primitive numpy signed distance (no compiled kernel)."""
    return tool.sdf_reference(np.asarray(p, float))
