"""Command-line front end.

Subcommands:

* ``positioning``  -- Monte-Carlo positioning over the evaluation grid;
  writes positioning_heatmap.csv, errors_cdf.csv, summary.json.
* ``calibrate``    -- per-axis squared RMSE of an ML positioning run;
  writes calibration.json (feeds ``fusion.calibration_file``).
* ``tracking``     -- tracking campaign over random trajectories; writes
  track_log.csv (one row per tick per trial), errors_cdf.csv, summary.json.
* ``trajectory``   -- sample trajectories only; writes trajectory_NNN.csv.

Option precedence is flags > --set overrides > config file > preset
defaults.  Figures (PNG) are rendered next to the delimited output unless
--no-figures is given.  Exit codes: 0 ok, 2 config error, 3 IO error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from .config import (
    ENV_OUTPUT_DIR,
    ExperimentConfig,
    apply_overrides,
    benchmark_preset,
    default_output_dir,
    load_config,
)
from .errors import ConfigError
from .evaluation import (
    DESK_GRID,
    calibrate_fixed_covariance,
    campaign_trajectory,
    cdf,
    evaluate_positioning,
    evaluate_tracking,
)
from .reporting import (
    TrackLogWriter,
    ensure_output_dir,
    format_table,
    write_calibration_json,
    write_cdf_csv,
    write_positioning_csv,
    write_summary_json,
    write_trajectory_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3

# campaign sizes per preset: (tracks, trials per track)
_PRESET_CAMPAIGN = {"desk": (10, 5), "full": (120, 40)}


def _kinds_label(kinds) -> str:
    return "+".join(k.value for k in kinds)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE",
                        help="sectioned key-value config file")
    common.add_argument("--benchmark", action="store_true",
                        help="start from the benchmark scenario defaults "
                             "(d/lambda = 0.315, dt-scaled process noise)")
    common.add_argument("--preset", choices=sorted(_PRESET_CAMPAIGN),
                        default="desk",
                        help="campaign scale: desk = 5x5 grid x 500 samples "
                             "and 10 tracks x 5 trials; full = 10x10 x 5000 "
                             "and 120 x 40 (default: %(default)s)")
    common.add_argument("--set", dest="overrides", action="append",
                        default=[], metavar="SECTION.KEY=VALUE",
                        help="override a single config key (repeatable)")
    common.add_argument("--output-dir", metavar="DIR",
                        help=f"output directory (default: $"
                             f"{ENV_OUTPUT_DIR} or ./out)")
    common.add_argument("--seed", type=int, help="master seed override")
    common.add_argument("--workers", type=int, default=1,
                        help="parallel worker processes (results are "
                             "identical for any worker count)")
    common.add_argument("--no-figures", action="store_true",
                        help="skip PNG rendering")

    parser = argparse.ArgumentParser(
        prog="bistrack",
        description="bistatic positioning and tracking experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("positioning", parents=[common],
                       help="Monte-Carlo positioning over the grid")
    p.set_defaults(func=cmd_positioning)

    p = sub.add_parser("calibrate", parents=[common],
                       help="calibrate the fixed measurement covariance")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("tracking", parents=[common],
                       help="tracking campaign over random trajectories")
    p.add_argument("--tracks", type=int, help="number of tracks "
                   "(default: per --preset)")
    p.add_argument("--trials", type=int, help="noise trials per track "
                   "(default: per --preset)")
    p.set_defaults(func=cmd_tracking)

    p = sub.add_parser("trajectory", parents=[common],
                       help="generate sample trajectories")
    p.add_argument("--count", type=int, default=1,
                   help="number of trajectories (default: %(default)s)")
    p.set_defaults(func=cmd_trajectory)
    return parser


def resolve_config(args) -> ExperimentConfig:
    base = benchmark_preset() if args.benchmark else ExperimentConfig()
    if args.preset == "desk":
        base = replace(base, grid=DESK_GRID)
    base = replace(base, output_dir=default_output_dir())
    cfg = load_config(args.config, base) if args.config else base
    if args.overrides:
        cfg = apply_overrides(cfg, args.overrides)
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    if args.output_dir:
        cfg = replace(cfg, output_dir=args.output_dir)
    return cfg


def cmd_positioning(cfg: ExperimentConfig, args) -> int:
    fus = cfg.fusion
    report = evaluate_positioning(cfg.grid, fus.estimator, fus.kinds,
                                  cfg.scenario, cfg.master_seed,
                                  ml_cfg=cfg.ml, workers=args.workers)
    out = ensure_output_dir(cfg.output_dir)
    write_positioning_csv(os.path.join(out, "positioning_heatmap.csv"),
                          report, cfg)
    have_errors = len(report.cdf_samples) > 0
    if have_errors:
        write_cdf_csv(os.path.join(out, "errors_cdf.csv"), report.cdf(), cfg,
                      title="absolute position error CDF")
    write_summary_json(os.path.join(out, "summary.json"), "positioning", cfg,
                       {"estimator": fus.estimator,
                        "kinds": _kinds_label(fus.kinds),
                        **report.to_dict()})
    if not args.no_figures:
        from . import figures
        figures.positioning_heatmap_png(os.path.join(out, "heatmap.png"),
                                        report, cfg.scenario)
        if have_errors:
            label = f"{fus.estimator}: {_kinds_label(fus.kinds)}"
            figures.cdf_png(os.path.join(out, "cdf.png"),
                            {label: report.cdf()})
    p95 = report.percentile(95.0) if have_errors else float("nan")
    print(format_table(
        ("estimator", "measurements", "rmse_x", "rmse_y", "rmse", "p95"),
        [(fus.estimator, _kinds_label(fus.kinds), report.rmse_x,
          report.rmse_y, report.rmse_total, p95)]))
    print(f"wrote {out}/positioning_heatmap.csv, errors_cdf.csv, summary.json")
    return EXIT_OK


def cmd_calibrate(cfg: ExperimentConfig, args) -> int:
    fixed = calibrate_fixed_covariance(cfg.grid, cfg.fusion.kinds,
                                       cfg.scenario, cfg.master_seed,
                                       ml_cfg=cfg.ml, workers=args.workers)
    out = ensure_output_dir(cfg.output_dir)
    path = os.path.join(out, "calibration.json")
    write_calibration_json(path, fixed, cfg)
    print(format_table(("sigma_x2", "sigma_y2"),
                       [(fixed.sigma_x2, fixed.sigma_y2)]))
    print(f"wrote {path}")
    return EXIT_OK


def cmd_tracking(cfg: ExperimentConfig, args) -> int:
    if cfg.tracker.dt != cfg.trajectory.dt:
        raise ConfigError(
            f"tracker.dt ({cfg.tracker.dt}) must equal trajectory.dt "
            f"({cfg.trajectory.dt}) for tracking runs")
    fus = cfg.fusion
    fixed = fus.resolve_fixed()
    tracks, trials = _PRESET_CAMPAIGN[args.preset]
    if args.tracks is not None:
        tracks = args.tracks
    if args.trials is not None:
        trials = args.trials

    out = ensure_output_dir(cfg.output_dir)
    first_run = None

    with TrackLogWriter(os.path.join(out, "track_log.csv"), cfg) as log:
        def sink(track, trial, rep):
            nonlocal first_run
            if first_run is None:
                first_run = rep
            log.add(track, trial, rep)

        report = evaluate_tracking(
            tracks, trials, fus.estimator, fus.covariance, kinds=fus.kinds,
            scenario=cfg.scenario, tracker_cfg=cfg.tracker,
            traj_cfg=cfg.trajectory, ml_cfg=cfg.ml, fixed=fixed,
            seed=cfg.master_seed, workers=args.workers, report_sink=sink)

    if len(report.loc_cdf_samples):
        write_cdf_csv(os.path.join(out, "errors_cdf.csv"),
                      cdf(report.loc_cdf_samples), cfg,
                      title="location error CDF (tracked)")
    write_summary_json(os.path.join(out, "summary.json"), "tracking", cfg,
                       {"kinds": _kinds_label(fus.kinds),
                        **report.to_dict()})
    if not args.no_figures:
        from . import figures
        curves = {}
        if len(report.loc_cdf_samples):
            curves["tracked"] = cdf(report.loc_cdf_samples)
        if len(report.raw_cdf_samples):
            curves["raw estimates"] = cdf(report.raw_cdf_samples)
        if curves:
            figures.cdf_png(os.path.join(out, "cdf.png"), curves)
        if first_run is not None:
            figures.track_png(os.path.join(out, "track.png"), first_run)
    print(format_table(
        ("estimator", "covariance", "measurements", "loc_rmse", "vel_rmse",
         "raw_rmse"),
        [(fus.estimator, fus.covariance, _kinds_label(fus.kinds),
          report.loc_rmse, report.vel_rmse, report.raw_rmse)]))
    print(f"wrote {out}/track_log.csv, errors_cdf.csv, summary.json")
    return EXIT_OK


def cmd_trajectory(cfg: ExperimentConfig, args) -> int:
    out = ensure_output_dir(cfg.output_dir)
    rows = []
    files = []
    for k in range(args.count):
        traj = campaign_trajectory(cfg.trajectory, cfg.master_seed, k)
        name = f"trajectory_{k:03d}.csv"
        write_trajectory_csv(os.path.join(out, name), traj, cfg)
        files.append(name)
        step = traj.pos[1:] - traj.pos[:-1]
        distance = float(((step ** 2).sum(axis=1) ** 0.5).sum())
        rows.append((k, len(traj), distance))
        if not args.no_figures:
            from . import figures
            figures.trajectory_png(
                os.path.join(out, f"trajectory_{k:03d}.png"), traj)
    write_summary_json(os.path.join(out, "summary.json"), "trajectory", cfg,
                       {"count": args.count, "files": files})
    print(format_table(("trajectory", "samples", "distance_m"), rows))
    print(f"wrote {args.count} trajectories to {out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return args.func(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
