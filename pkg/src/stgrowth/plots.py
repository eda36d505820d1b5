"""Static SVG figures for fitted models.

Every figure is a plain file emission; no interactive backends.  Outputs are
byte-stable across runs: the SVG hash salt is pinned and date metadata is
stripped, so identical inputs give identical files.
"""

from __future__ import annotations

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .inference import PredictiveDraws  # noqa: E402
from .model import CountPanel  # noqa: E402

__all__ = ["save_trend_plot", "save_phi_heatmap", "save_region_fit_plot"]

matplotlib.rcParams["svg.hashsalt"] = "stgrowth"


def _save(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def save_trend_plot(lam_draws: np.ndarray, path, week_labels=None,
                    block_labels=None) -> None:
    """Weekly trend with a pointwise 95% band.

    lam_draws: (S, T) posterior draws of a shared trend curve, or (S, B, T)
    for per-block curves (one band + median each).  The bands use the same
    2.5/97.5 percentiles reported in the fit summary.
    """
    lam = np.asarray(lam_draws, dtype=float)
    if lam.ndim == 2:
        lam = lam[:, None, :]
    if lam.ndim != 3:
        raise ValueError(f"expected (n_draws, [n_blocks,] n_times), got shape "
                         f"{np.asarray(lam_draws).shape}")
    n_blocks = lam.shape[1]
    t = np.arange(1, lam.shape[2] + 1)
    fig, ax = plt.subplots(figsize=(7, 4))
    cmap = plt.get_cmap("tab10" if n_blocks <= 10 else "tab20")
    for j in range(n_blocks):
        lo, mid, hi = np.percentile(lam[:, j, :], [2.5, 50.0, 97.5], axis=0)
        color = "tab:blue" if n_blocks == 1 else cmap(j % cmap.N)
        name = (str(block_labels[j]) if block_labels is not None
                and len(block_labels) == n_blocks else None)
        if n_blocks == 1:
            ax.fill_between(t, lo, hi, alpha=0.3, color=color,
                            label="95% interval")
            ax.plot(t, mid, color=color, label="posterior median")
        else:
            ax.fill_between(t, lo, hi, alpha=0.12, color=color)
            ax.plot(t, mid, color=color, linewidth=1.2, label=name)
    ax.set_xlabel("week")
    ax.set_ylabel("trend")
    if n_blocks == 1 or (block_labels is not None and n_blocks <= 20):
        ax.legend(frameon=False, fontsize=7 if n_blocks > 1 else None)
    if week_labels is not None and len(week_labels) == lam.shape[2]:
        step = max(1, len(week_labels) // 8)
        ax.set_xticks(t[::step])
        ax.set_xticklabels([str(w) for w in week_labels[::step]], rotation=45,
                           ha="right", fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def save_phi_heatmap(phi_mean: np.ndarray, path, regions=None) -> None:
    """Posterior-mean random effects as a region (rows) by week (columns) grid."""
    phi = np.asarray(phi_mean, dtype=float)
    if phi.ndim != 2:
        raise ValueError(f"expected (n_times, n_regions), got shape {phi.shape}")
    grid = phi.T  # rows = regions, columns = weeks
    g, t = grid.shape
    fig, ax = plt.subplots(figsize=(0.35 * t + 2.5, 0.28 * g + 1.5))
    vmax = float(np.max(np.abs(grid))) or 1.0
    im = ax.imshow(grid, aspect="auto", cmap="RdBu_r", vmin=-vmax, vmax=vmax)
    ax.set_xlabel("week")
    ax.set_ylabel("region")
    ax.set_xticks(np.arange(0, t, max(1, t // 12)))
    ax.set_xticklabels(np.arange(1, t + 1)[:: max(1, t // 12)])
    if regions is not None and len(regions) == g:
        ax.set_yticks(np.arange(g))
        ax.set_yticklabels([str(r) for r in regions], fontsize=7)
    fig.colorbar(im, ax=ax, shrink=0.85, label="random effect")
    fig.tight_layout()
    _save(fig, path)


def save_region_fit_plot(panel: CountPanel, pred: PredictiveDraws, path) -> None:
    """Per-region observed counts against the 95% predictive band.

    Held-out cells are drawn as open circles so calibration is visible.
    """
    lo, hi = pred.interval(0.95)
    med = np.percentile(pred.counts, 50.0, axis=0)
    g = panel.n_regions
    t = np.arange(1, panel.n_times + 1)
    ncol = min(4, g)
    nrow = (g + ncol - 1) // ncol
    fig, axes = plt.subplots(
        nrow, ncol, figsize=(3.2 * ncol, 2.4 * nrow), squeeze=False,
        sharex=True,
    )
    for gi in range(g):
        ax = axes[gi // ncol][gi % ncol]
        ax.fill_between(t, lo[gi], hi[gi], alpha=0.3, color="tab:orange")
        ax.plot(t, med[gi], color="tab:orange", lw=1)
        obs = panel.observed[gi]
        ax.plot(t[obs], panel.y[gi, obs], "k.", ms=4)
        if np.any(~obs):
            ax.plot(t[~obs], panel.y[gi, ~obs], "o", ms=4, mfc="none", mec="k")
        ax.set_title(str(panel.regions[gi]), fontsize=8)
    for k in range(g, nrow * ncol):
        axes[k // ncol][k % ncol].set_axis_off()
    fig.tight_layout()
    _save(fig, path)
