"""Report figures: error time series and trajectory overlays, rendered to files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .geomap import MOVABLE, STRUCTURE, UNKNOWN, WATER, SemanticMap
from .harness import RunResult

_CLASS_COLORS = {
    WATER: (0.82, 0.90, 0.96),
    STRUCTURE: (0.35, 0.35, 0.38),
    MOVABLE: (0.95, 0.60, 0.20),
    UNKNOWN: (0.88, 0.88, 0.88),
}


def plot_error_series(steps: list, out_path: str | Path,
                      spreads: list | None = None) -> Path:
    """Localization error over time: filter in blue, dead reckoning in red.

    When particle spreads are given they are drawn as a light blue band from
    zero, visualizing the filter's own uncertainty.
    """
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    t = [s["t"] for s in steps]
    fig, ax = plt.subplots(figsize=(8, 4))
    if spreads is not None:
        ax.fill_between(t, 0.0, spreads, color="lightblue", alpha=0.6,
                        label="particle spread")
    ax.plot(t, [s["dr_error"] for s in steps], color="tab:red", label="dead reckoning")
    ax.plot(t, [s["pf_error"] for s in steps], color="tab:blue", label="particle filter")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("position error [m]")
    ax.legend(loc="upper left")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def plot_trajectories(result: RunResult, out_path: str | Path,
                      world_map: SemanticMap | None = None) -> Path:
    """Top-down overlay of ground truth, dead reckoning, and filter estimates."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(7, 7))
    if world_map is not None:
        rgb = np.zeros(world_map.cells.shape + (3,))
        for label, color in _CLASS_COLORS.items():
            rgb[world_map.cells == label] = color
        ax.imshow(rgb, origin="lower", extent=(
            world_map.origin_x, world_map.origin_x + world_map.width_m,
            world_map.origin_y, world_map.origin_y + world_map.height_m,
        ), interpolation="nearest")
    rows = result.rows
    if any(r.gt_x is not None for r in rows):
        ax.plot([r.gt_x for r in rows if r.gt_x is not None],
                [r.gt_y for r in rows if r.gt_y is not None],
                color="black", linestyle="--", linewidth=1.2, label="ground truth")
    ax.plot([r.dr_x for r in rows], [r.dr_y for r in rows],
            color="tab:red", linewidth=1.2, label="dead reckoning")
    ax.plot([r.est_x for r in rows], [r.est_y for r in rows],
            color="tab:blue", linewidth=1.2, label="particle filter")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal")
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
