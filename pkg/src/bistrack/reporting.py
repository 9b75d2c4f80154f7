"""File writers for experiment outputs.

Every output embeds the resolved configuration and the master seed: CSV
files as '#'-prefixed header comments, JSON files as ``config`` /
``master_seed`` fields.  All numbers are written with 9 significant digits
so repeat runs can be diffed byte for byte.  JSON summaries carry a
``schema_version`` field (currently 1).
"""

from __future__ import annotations

import json
import os

import numpy as np

from .config import ExperimentConfig, serialize_config
from .evaluation import EvalReport, TrackingReport
from .mlpos import FixedCovariance
from .tracker import TrackReport
from .trajectory import Trajectory

SCHEMA_VERSION = 1

_NUM = "%.9g"


def _header(cfg: ExperimentConfig, title: str) -> str:
    lines = [f"# {title}", f"# master_seed = {cfg.master_seed}", "#"]
    for raw in serialize_config(cfg).splitlines():
        lines.append(f"# {raw}" if raw else "#")
    return "\n".join(lines) + "\n"


def _fmt_row(values) -> str:
    return ",".join(_NUM % v for v in values) + "\n"


def write_positioning_csv(path: str, report: EvalReport,
                          cfg: ExperimentConfig) -> None:
    """Per-grid-point RMSE map: columns x, y, rmse."""
    with open(path, "w") as fh:
        fh.write(_header(cfg, "positioning heatmap"))
        fh.write("x,y,rmse\n")
        for (x, y), r in zip(report.point_xy, report.point_rmse):
            fh.write(_fmt_row((x, y, r)))


def write_cdf_csv(path: str, curve: np.ndarray, cfg: ExperimentConfig,
                  title: str = "error CDF") -> None:
    """Empirical CDF: columns value, fraction; ``curve`` is (n, 2)."""
    with open(path, "w") as fh:
        fh.write(_header(cfg, title))
        fh.write("value,fraction\n")
        for value, fraction in curve:
            fh.write(_fmt_row((value, fraction)))


class TrackLogWriter:
    """Streams per-tick rows of tracking runs to CSV, one row per tick per
    trial.  Usable as a ``report_sink`` for evaluate_tracking via ``add``."""

    def __init__(self, path: str, cfg: ExperimentConfig):
        self._fh = open(path, "w")
        self._fh.write(_header(cfg, "track log"))
        self._fh.write("track,trial,t,truth_px,truth_py,truth_vx,truth_vy,"
                       "est_x,est_y,state_px,state_py,state_vx,state_vy,"
                       "outcome,reset\n")

    def add(self, track: int, trial: int, rep: TrackReport) -> None:
        write = self._fh.write
        for i in range(len(rep.t)):
            write("%d,%d," % (track, trial))
            write(_NUM % rep.t[i])
            for block in (rep.truth[i], rep.estimate[i], rep.state[i]):
                for v in block:
                    write("," + _NUM % v)
            write(",%d,%d\n" % (rep.outcome[i], int(rep.reset[i])))

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def write_track_log_csv(path: str, runs, cfg: ExperimentConfig) -> None:
    """Per-tick log; ``runs`` yields (track, trial, TrackReport) triples."""
    with TrackLogWriter(path, cfg) as writer:
        for track, trial, rep in runs:
            writer.add(track, trial, rep)


def write_trajectory_csv(path: str, traj: Trajectory,
                         cfg: ExperimentConfig) -> None:
    """Sampled trajectory: columns t, px, py, vx, vy."""
    with open(path, "w") as fh:
        fh.write(_header(cfg, "trajectory"))
        fh.write("t,px,py,vx,vy\n")
        for i in range(len(traj)):
            fh.write(_fmt_row((traj.t[i], traj.pos[i, 0], traj.pos[i, 1],
                               traj.vel[i, 0], traj.vel[i, 1])))


def write_summary_json(path: str, command: str, cfg: ExperimentConfig,
                       payload: dict) -> None:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "master_seed": cfg.master_seed,
        "config": serialize_config(cfg),
    }
    doc.update(payload)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_calibration_json(path: str, fixed: FixedCovariance,
                           cfg: ExperimentConfig) -> None:
    with open(path, "w") as fh:
        json.dump({
            "schema_version": SCHEMA_VERSION,
            "sigma_x2": fixed.sigma_x2,
            "sigma_y2": fixed.sigma_y2,
            "master_seed": cfg.master_seed,
            "config": serialize_config(cfg),
        }, fh, indent=2, sort_keys=True)
        fh.write("\n")


def format_table(headers, rows) -> str:
    """Left-aligned fixed-width text table (the CLI headline output)."""
    cells = [[str(h) for h in headers]]
    for row in rows:
        cells.append([_NUM % v if isinstance(v, float) else str(v)
                      for v in row])
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    out = []
    for r, row in enumerate(cells):
        out.append("  ".join(col.ljust(w) for col, w in zip(row, widths))
                   .rstrip())
        if r == 0:
            out.append("  ".join("-" * w for w in widths))
    return "\n".join(out)


def ensure_output_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path
