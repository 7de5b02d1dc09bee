"""Figure rendering for reports: radio-map heatmaps, floor plans with AP
markers, optimization traces, and training curves. All figures go to files;
no interactive backend is ever required."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .floorplan import CellKind, FloorPlan
from .propagation import RadioMap

__all__ = [
    "save_field_png",
    "save_floorplan_png",
    "save_radio_map_figures",
    "save_trace_png",
    "save_loss_curves_png",
]


def _extent(fp: FloorPlan):
    x_min, x_max, y_min, y_max = fp.bounds
    return (x_min, x_max, y_min, y_max)


def save_field_png(fp: FloorPlan, field: np.ndarray, path, title: str = "",
                   cbar_label: str = "", cmap: str = "viridis") -> None:
    fig, ax = plt.subplots(figsize=(6, 5))
    im = ax.imshow(field, origin="lower", extent=_extent(fp), cmap=cmap)
    walls = np.where(fp.grid == CellKind.Wall, 1.0, np.nan)
    ax.imshow(walls, origin="lower", extent=_extent(fp), cmap="gray_r", vmin=0, vmax=1)
    fig.colorbar(im, ax=ax, label=cbar_label)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_floorplan_png(fp: FloorPlan, path, deployment=None, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(6, 5))
    ax.imshow(fp.grid, origin="lower", extent=_extent(fp), cmap="Greys", vmin=0, vmax=3)
    if deployment is not None:
        arr = np.atleast_2d(np.asarray(deployment if not hasattr(deployment, "as_array") else deployment.as_array()))
        ax.scatter(arr[:, 0], arr[:, 1], marker="*", s=180, c="tab:red",
                   edgecolors="black", zorder=3, label="AP")
        ax.legend(loc="upper right")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(title or fp.name)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_radio_map_figures(fp: FloorPlan, radio_map: RadioMap, outdir,
                           prefix: str = "map", deployment=None) -> list:
    """One PNG per field; returns the written paths."""
    import os

    written = []
    fields = [
        ("pathloss_best_db", np.min(radio_map.pathloss, axis=0), "best pathloss [dB]", "viridis_r"),
        ("interference_dbm", radio_map.interference_dbm(), "interference [dBm]", "magma"),
        ("throughput_mbps", radio_map.throughput_bps / 1e6, "throughput [Mbps]", "viridis"),
        ("covered", radio_map.covered.astype(float), "covered", "RdYlGn"),
    ]
    for name, values, label, cmap in fields:
        grid = radio_map.field_grid(values)
        path = os.path.join(outdir, f"{prefix}_{name}.png")
        save_field_png(fp, grid, path, title=name.replace("_", " "), cbar_label=label, cmap=cmap)
        written.append(path)
    if deployment is not None:
        path = os.path.join(outdir, f"{prefix}_deployment.png")
        save_floorplan_png(fp, path, deployment=deployment)
        written.append(path)
    return written


def save_trace_png(trace, path, title: str = "optimization trace") -> None:
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    its = [row.iteration for row in trace]
    ax1.plot(its, [row.best_reward for row in trace], label="best reward")
    ax1.plot(its, [row.mean_reward for row in trace], label="mean reward", alpha=0.6)
    ax1.set_ylabel("reward")
    ax1.legend()
    ax1.set_title(title)
    ax2.plot(its, [row.ess for row in trace], color="tab:orange")
    ax2.set_ylabel("ESS")
    ax2.set_xlabel("iteration")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_loss_curves_png(curves, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    epochs = [c[0] for c in curves]
    ax.plot(epochs, [c[1] for c in curves], label="train MSE")
    ax.plot(epochs, [c[2] for c in curves], label="val MSE")
    ax.set_xlabel("epoch")
    ax.set_ylabel("MSE")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
