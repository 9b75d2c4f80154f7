"""Figure rendering for the command-line report path.

Only the CLI imports this module; the library core stays plot-free.  All
functions write a PNG next to the delimited output and return the path.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import EvalReport
from .geometry import ScenarioConfig
from .tracker import TrackReport
from .trajectory import Trajectory

_DPI = 130


def positioning_heatmap_png(path: str, report: EvalReport,
                            scenario: ScenarioConfig) -> str:
    grid = report.grid
    rmse = report.point_rmse.reshape(grid.ny, grid.nx)
    fig, ax = plt.subplots(figsize=(6.4, 5.4))
    im = ax.imshow(rmse, origin="lower", aspect="equal",
                   extent=(*grid.x_bounds, *grid.y_bounds),
                   interpolation="nearest")
    fig.colorbar(im, ax=ax, label="position RMSE [m]")
    ax.plot([scenario.tx_x, scenario.rx_x], [0.0, 0.0], "k^",
            markersize=9, clip_on=False)
    ax.annotate("TX", (scenario.tx_x, 0), textcoords="offset points",
                xytext=(0, -14), ha="center")
    ax.annotate("RX", (scenario.rx_x, 0), textcoords="offset points",
                xytext=(0, -14), ha="center")
    ax.set_ylim(bottom=min(grid.y_bounds[0], 0.0) - 2.0)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title("positioning RMSE over the grid")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def cdf_png(path: str, curves: dict[str, np.ndarray],
            xlabel: str = "absolute error [m]") -> str:
    """Empirical CDF curves; ``curves`` maps label -> (n, 2) value/fraction."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for label, curve in curves.items():
        ax.plot(curve[:, 0], curve[:, 1], label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("CDF")
    ax.set_ylim(0.0, 1.0)
    ax.grid(True, alpha=0.4)
    if len(curves) > 1:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def track_png(path: str, rep: TrackReport, stride: int = 25) -> str:
    """Ground truth, raw estimates (decimated), and the filtered track."""
    fig, ax = plt.subplots(figsize=(6.4, 5.4))
    ax.plot(rep.truth[:, 0], rep.truth[:, 1], "-", color="0.4", lw=1.6,
            label="ground truth")
    est = rep.estimate[::stride]
    ax.plot(est[:, 0], est[:, 1], ".", color="tab:orange", markersize=2.5,
            alpha=0.5, label="raw estimates")
    ax.plot(rep.state[:, 0], rep.state[:, 1], "-", color="tab:blue", lw=1.0,
            label="filter")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal")
    ax.legend(loc="best")
    ax.set_title("tracked run")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def trajectory_png(path: str, traj: Trajectory) -> str:
    fig, (ax, ax2) = plt.subplots(
        1, 2, figsize=(9.6, 4.4), gridspec_kw={"width_ratios": (3, 2)})
    ax.plot(traj.pos[:, 0], traj.pos[:, 1], "-", lw=1.2)
    ax.plot(traj.waypoints[:, 0], traj.waypoints[:, 1], "x",
            color="tab:red", markersize=5, label="waypoints")
    ax.plot(traj.pos[0, 0], traj.pos[0, 1], "o", color="tab:green",
            label="start")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal")
    ax.legend(loc="best")
    speed = np.hypot(traj.vel[:, 0], traj.vel[:, 1])
    ax2.plot(traj.t, speed, lw=1.0)
    ax2.set_xlabel("t [s]")
    ax2.set_ylabel("speed [m/s]")
    ax2.grid(True, alpha=0.4)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path
