"""Report figures: optimization curve, grouped importance and a SHAP summary."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# no software/version stamp so reruns give identical bytes
PNG_META = {"Software": None}


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=PNG_META)
    plt.close(fig)


def plot_curve(rows: list[dict], path) -> None:
    it = [r["iteration"] for r in rows]
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    ax.plot(it, [r["batch_mean"] for r in rows], color="0.6", lw=1, label="batch mean")
    ax.plot(it, [r["best_so_far"] for r in rows], color="C0", lw=2, label="best so far")
    ax.set_xlabel("iteration")
    ax.set_ylabel("hand score")
    ax.set_ylim(0, 1)
    ax.legend(loc="lower right")
    _save(fig, path)


def plot_group_importance(groups: list[tuple[str, float]], path) -> None:
    names = [g for g, _ in groups][::-1]
    vals = [v for _, v in groups][::-1]
    fig, ax = plt.subplots(figsize=(6.4, 3.2))
    ax.barh(names, vals, color="C1")
    ax.set_xlabel("mean |SHAP| summed over group")
    _save(fig, path)


def plot_shap_summary(long_rows: list[dict], features: list[str], path, max_features: int = 12) -> None:
    """One row of points per feature: x = phi, colour = normalised value."""
    feats = features[:max_features]
    rng = np.random.default_rng(0)
    fig, ax = plt.subplots(figsize=(6.4, 0.35 * len(feats) + 1.2))
    for row, name in enumerate(reversed(feats)):
        pts = [r for r in long_rows if r["name"] == name]
        phi = np.array([r["phi"] for r in pts])
        val = np.array([r["value"] for r in pts], float)
        ok = ~np.isnan(val)
        col = np.full(len(val), 0.5)
        if ok.any() and np.ptp(val[ok]) > 0:
            col[ok] = (val[ok] - val[ok].min()) / np.ptp(val[ok])
        y = row + rng.uniform(-0.25, 0.25, len(phi))
        ax.scatter(phi[ok], y[ok], c=col[ok], cmap="coolwarm", vmin=0, vmax=1, s=8)
        ax.scatter(phi[~ok], y[~ok], color="0.7", s=8, marker="x")
    ax.set_yticks(range(len(feats)))
    ax.set_yticklabels(list(reversed(feats)))
    ax.axvline(0, color="0.3", lw=0.8)
    ax.set_xlabel("SHAP value (grey x = inactive)")
    _save(fig, path)
