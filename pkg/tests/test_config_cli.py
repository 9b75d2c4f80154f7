"""Config file grammar, file writers, and the command-line front end."""

import json
import os

import numpy as np
import pytest

from bistrack.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, build_parser, main, \
    resolve_config
from bistrack.config import (
    ExperimentConfig,
    FusionConfig,
    apply_overrides,
    benchmark_preset,
    default_output_dir,
    parse_config,
    serialize_config,
)
from bistrack.errors import ConfigError
from bistrack.evaluation import DESK_GRID
from bistrack.geometry import MeasurementKind
from bistrack.reporting import TrackLogWriter, format_table
from bistrack.tracker import TrackReport


# ---------------------------------------------------------------------------
# config grammar
# ---------------------------------------------------------------------------

def test_serialize_parse_round_trip():
    for cfg in (ExperimentConfig(), benchmark_preset()):
        text = serialize_config(cfg)
        again = parse_config(text)
        assert again == cfg
        assert serialize_config(again) == text


def test_empty_config_is_the_defaults():
    assert parse_config("") == ExperimentConfig()


def test_parse_config_overlays_the_base():
    base = benchmark_preset()
    cfg = parse_config("[scenario]\nsigma_r = 0.3\n", base)
    assert cfg.scenario.sigma_r == 0.3
    assert cfg.scenario.d_over_lambda == 0.315      # preserved from base
    assert cfg.tracker.q_mode == "accel"


def test_parse_config_sections_and_values():
    cfg = parse_config("""
[scenario]
d_over_lambda = 0.4

[fusion]
kinds = naf_rx, range
estimator = ml
covariance = hessian

[run]
master_seed = 17
output_dir = results
""")
    assert cfg.scenario.d_over_lambda == 0.4
    # kinds canonicalized: range sorts before the angles
    assert cfg.fusion.kinds == (MeasurementKind.BISTATIC_RANGE,
                                MeasurementKind.NAF_RX)
    assert cfg.master_seed == 17
    assert cfg.output_dir == "results"


def test_parse_config_rejects_unknowns():
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config("[sensor]\nc = 5\n")
    with pytest.raises(ConfigError, match="unknown key scenario.gain"):
        parse_config("[scenario]\ngain = 3\n")
    with pytest.raises(ConfigError, match="DEFAULT"):
        parse_config("[DEFAULT]\nc = 5\n")
    with pytest.raises(ConfigError, match="syntax"):
        parse_config("no section header")


def test_parse_config_reports_bad_values():
    with pytest.raises(ConfigError, match="scenario.sigma_r"):
        parse_config("[scenario]\nsigma_r = fast\n")
    with pytest.raises(ConfigError, match="tracker.q_mode"):
        parse_config("[tracker]\nq_mode = white\n")
    with pytest.raises(ConfigError, match="fusion.kinds"):
        parse_config("[fusion]\nkinds = range, doppler\n")
    with pytest.raises(ConfigError, match=r"\[ml\]"):
        parse_config("[ml]\ny_min = -1\n")      # invariant violation


def test_fusion_invariants():
    with pytest.raises(ConfigError, match="duplicates"):
        FusionConfig(kinds=(MeasurementKind.NAF_TX, MeasurementKind.NAF_TX))
    with pytest.raises(ConfigError, match="exactly 2"):
        FusionConfig(estimator="geo")
    with pytest.raises(ConfigError, match="at least 2"):
        FusionConfig(kinds=(MeasurementKind.BISTATIC_RANGE,))
    with pytest.raises(ConfigError, match="taylor"):
        FusionConfig(estimator="ml", covariance="taylor")
    with pytest.raises(ConfigError, match="together"):
        FusionConfig(fixed_sigma_x2=0.5)
    with pytest.raises(ConfigError, match="fixed"):
        FusionConfig(covariance="fixed")
    geo = FusionConfig(kinds=(MeasurementKind.NAF_RX, MeasurementKind.NAF_TX),
                       estimator="geo", covariance="taylor")
    assert geo.kinds == (MeasurementKind.NAF_TX, MeasurementKind.NAF_RX)


def test_resolve_fixed_sources(tmp_path):
    inline = FusionConfig(covariance="fixed", fixed_sigma_x2=0.9,
                          fixed_sigma_y2=0.4)
    fc = inline.resolve_fixed()
    assert (fc.sigma_x2, fc.sigma_y2) == (0.9, 0.4)

    path = tmp_path / "calibration.json"
    path.write_text(json.dumps({"sigma_x2": 0.25, "sigma_y2": 0.36}))
    from_file = FusionConfig(covariance="fixed", calibration_file=str(path))
    fc = from_file.resolve_fixed()
    assert (fc.sigma_x2, fc.sigma_y2) == (0.25, 0.36)

    missing = FusionConfig(covariance="fixed",
                           calibration_file=str(tmp_path / "nope.json"))
    with pytest.raises(ConfigError, match="not found"):
        missing.resolve_fixed()

    path.write_text("{broken")
    with pytest.raises(ConfigError, match="bad calibration"):
        from_file.resolve_fixed()

    assert FusionConfig().resolve_fixed() is None


def test_apply_overrides():
    cfg = apply_overrides(ExperimentConfig(), [
        "scenario.sigma_r = 0.2", "run.master_seed=9",
        "fusion.kinds=naf_tx,naf_rx"])
    assert cfg.scenario.sigma_r == 0.2
    assert cfg.master_seed == 9
    assert cfg.fusion.kinds == (MeasurementKind.NAF_TX,
                                MeasurementKind.NAF_RX)
    with pytest.raises(ConfigError, match="unknown key"):
        apply_overrides(cfg, ["scenario.gain=2"])
    with pytest.raises(ConfigError, match="section.key=value"):
        apply_overrides(cfg, ["sigma_r:0.2"])
    with pytest.raises(ConfigError, match="scenario.sigma_r"):
        apply_overrides(cfg, ["scenario.sigma_r=much"])


def test_default_output_dir_env(monkeypatch):
    monkeypatch.delenv("BISTRACK_OUTPUT_DIR", raising=False)
    assert default_output_dir() == "out"
    monkeypatch.setenv("BISTRACK_OUTPUT_DIR", "/tmp/elsewhere")
    assert default_output_dir() == "/tmp/elsewhere"


# ---------------------------------------------------------------------------
# reporting primitives
# ---------------------------------------------------------------------------

def test_format_table_alignment():
    text = format_table(("name", "value"), [("alpha", 1.5), ("b", 22.25)])
    lines = text.splitlines()
    assert lines[0].startswith("name")
    assert set(lines[1]) <= {"-", " "}
    assert len(lines) == 4
    assert "22.25" in lines[3]


def test_track_log_writer(tmp_path):
    rep = TrackReport(
        t=np.array([0.0, 0.01]),
        truth=np.arange(8.0).reshape(2, 4),
        estimate=np.array([[np.nan, np.nan], [1.0, 2.0]]),
        state=np.arange(8.0).reshape(2, 4) + 0.5,
        outcome=np.array([5, 0], dtype=np.uint8),
        reset=np.array([False, True]),
    )
    path = tmp_path / "track_log.csv"
    with TrackLogWriter(str(path), ExperimentConfig()) as log:
        log.add(0, 0, rep)
        log.add(0, 1, rep)
    lines = [ln for ln in path.read_text().splitlines()
             if not ln.startswith("#")]
    assert lines[0].split(",") == [
        "track", "trial", "t", "truth_px", "truth_py", "truth_vx", "truth_vy",
        "est_x", "est_y", "state_px", "state_py", "state_vx", "state_vy",
        "outcome", "reset"]
    assert len(lines) == 1 + 4
    first = lines[1].split(",")
    assert first[:2] == ["0", "0"]
    assert first[7] == "nan"
    assert lines[2].split(",")[-2:] == ["0", "1"]


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def _read_summary(out_dir):
    with open(os.path.join(out_dir, "summary.json")) as fh:
        return json.load(fh)


def test_cli_presets_resolve_scales():
    parser = build_parser()
    desk = resolve_config(parser.parse_args(["positioning"]))
    assert desk.grid == DESK_GRID
    full = resolve_config(parser.parse_args(["positioning", "--preset",
                                             "full"]))
    assert (full.grid.nx, full.grid.ny, full.grid.samples_per_point) \
        == (10, 10, 5000)
    bench = resolve_config(parser.parse_args(["positioning", "--benchmark"]))
    assert bench.scenario.d_over_lambda == 0.315
    assert bench.tracker.q_mode == "accel"


def test_cli_flag_precedence(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[scenario]\nsigma_r = 0.5\n\n[run]\nmaster_seed = 3\n")
    parser = build_parser()
    args = parser.parse_args([
        "positioning", "--config", str(ini),
        "--set", "scenario.sigma_r=0.7", "--seed", "11"])
    cfg = resolve_config(args)
    assert cfg.scenario.sigma_r == 0.7       # --set beats the file
    assert cfg.master_seed == 11             # --seed beats everything


def test_cli_trajectory_end_to_end(tmp_path):
    out = str(tmp_path / "traj")
    code = main(["trajectory", "--output-dir", out, "--count", "2",
                 "--set", "trajectory.duration=2.0", "--no-figures"])
    assert code == EXIT_OK
    for name in ("trajectory_000.csv", "trajectory_001.csv", "summary.json"):
        assert os.path.exists(os.path.join(out, name))
    doc = _read_summary(out)
    assert doc["schema_version"] == 1
    assert doc["command"] == "trajectory"
    assert doc["files"] == ["trajectory_000.csv", "trajectory_001.csv"]
    embedded = parse_config(doc["config"])
    assert embedded.trajectory.duration == 2.0
    rows = [ln for ln in open(os.path.join(out, "trajectory_000.csv"))
            if not ln.startswith("#")]
    assert rows[0].strip() == "t,px,py,vx,vy"
    assert len(rows) == 1 + 201              # duration 2 s at dt = 0.01


def test_cli_positioning_end_to_end(tmp_path, capsys):
    out = str(tmp_path / "pos")
    code = main(["positioning", "--output-dir", out, "--no-figures",
                 "--set", "grid.nx=2", "--set", "grid.ny=2",
                 "--set", "grid.samples_per_point=10"])
    assert code == EXIT_OK
    printed = capsys.readouterr().out
    assert "rmse_x" in printed and "wrote" in printed
    heatmap = [ln for ln in open(os.path.join(out, "positioning_heatmap.csv"))
               if not ln.startswith("#")]
    assert heatmap[0].strip() == "x,y,rmse"
    assert len(heatmap) == 1 + 4
    curve = [ln for ln in open(os.path.join(out, "errors_cdf.csv"))
             if not ln.startswith("#")]
    assert curve[0].strip() == "value,fraction"
    doc = _read_summary(out)
    assert doc["command"] == "positioning"
    assert doc["estimator"] == "ml"
    assert doc["kinds"] == "range+naf_tx+naf_rx"
    assert doc["n_used"] + doc["n_discarded"] == doc["n_draws"] == 40


def test_cli_reruns_are_byte_identical(tmp_path, monkeypatch):
    monkeypatch.delenv("BISTRACK_OUTPUT_DIR", raising=False)
    outputs = {}
    argv = ["positioning", "--no-figures", "--set", "grid.nx=2",
            "--set", "grid.ny=2", "--set", "grid.samples_per_point=8"]
    for run in ("first", "second"):
        workdir = tmp_path / run
        workdir.mkdir()
        monkeypatch.chdir(workdir)
        assert main(argv) == EXIT_OK
        outputs[run] = {
            name: (workdir / "out" / name).read_bytes()
            for name in ("positioning_heatmap.csv", "errors_cdf.csv",
                         "summary.json")}
    assert outputs["first"] == outputs["second"]


def test_cli_positioning_renders_figures(tmp_path):
    out = str(tmp_path / "figs")
    code = main(["positioning", "--output-dir", out,
                 "--set", "grid.nx=2", "--set", "grid.ny=2",
                 "--set", "grid.samples_per_point=5"])
    assert code == EXIT_OK
    for name in ("heatmap.png", "cdf.png"):
        with open(os.path.join(out, name), "rb") as fh:
            assert fh.read(4) == b"\x89PNG"


def test_cli_tracking_end_to_end(tmp_path):
    out = str(tmp_path / "trk")
    code = main(["tracking", "--output-dir", out, "--no-figures",
                 "--tracks", "1", "--trials", "2",
                 "--set", "trajectory.duration=1.0"])
    assert code == EXIT_OK
    log = [ln for ln in open(os.path.join(out, "track_log.csv"))
           if not ln.startswith("#")]
    assert len(log) == 1 + 2 * 101           # header + trials x ticks
    assert all(len(ln.split(",")) == 15 for ln in log[1:])
    doc = _read_summary(out)
    assert doc["command"] == "tracking"
    assert doc["n_tracks"] == 1 and doc["trials_per_track"] == 2
    assert doc["loc_rmse"] > 0
    assert os.path.exists(os.path.join(out, "errors_cdf.csv"))


def test_cli_calibrate_feeds_tracking(tmp_path):
    cal_dir = str(tmp_path / "cal")
    shrink = ["--set", "grid.nx=2", "--set", "grid.ny=2",
              "--set", "grid.samples_per_point=20"]
    assert main(["calibrate", "--output-dir", cal_dir, "--no-figures",
                 *shrink]) == EXIT_OK
    cal_file = os.path.join(cal_dir, "calibration.json")
    with open(cal_file) as fh:
        cal = json.load(fh)
    assert cal["sigma_x2"] > 0 and cal["sigma_y2"] > 0

    out = str(tmp_path / "trk")
    code = main(["tracking", "--output-dir", out, "--no-figures",
                 "--tracks", "1", "--trials", "1",
                 "--set", "trajectory.duration=1.0",
                 "--set", "fusion.covariance=fixed",
                 "--set", f"fusion.calibration_file={cal_file}"])
    assert code == EXIT_OK
    doc = _read_summary(out)
    assert doc["cov_mode"] == "fixed"


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["positioning", "--config",
                 str(tmp_path / "missing.ini")]) == EXIT_IO
    bad = tmp_path / "bad.ini"
    bad.write_text("[scenario]\nwarp = 9\n")
    assert main(["positioning", "--config", str(bad)]) == EXIT_CONFIG
    assert main(["positioning", "--set", "scenario.sigma_r=-1"]) \
        == EXIT_CONFIG
    assert main(["tracking", "--tracks", "1", "--trials", "1",
                 "--set", "tracker.dt=0.02"]) == EXIT_CONFIG
    capsys.readouterr()                      # swallow the error prints
    with pytest.raises(SystemExit) as exc:
        main(["warp-drive"])
    assert exc.value.code == 2


def test_cli_env_output_dir(tmp_path, monkeypatch):
    target = str(tmp_path / "from_env")
    monkeypatch.setenv("BISTRACK_OUTPUT_DIR", target)
    code = main(["trajectory", "--no-figures", "--count", "1",
                 "--set", "trajectory.duration=1.0"])
    assert code == EXIT_OK
    assert os.path.exists(os.path.join(target, "trajectory_000.csv"))


def test_cli_seed_changes_outputs(tmp_path):
    docs = []
    for seed in ("1", "2"):
        out = str(tmp_path / f"s{seed}")
        assert main(["positioning", "--output-dir", out, "--no-figures",
                     "--seed", seed, "--set", "grid.nx=2",
                     "--set", "grid.ny=2",
                     "--set", "grid.samples_per_point=10"]) == EXIT_OK
        docs.append(_read_summary(out))
    assert docs[0]["master_seed"] == 1
    assert docs[1]["master_seed"] == 2
    assert docs[0]["rmse"] != docs[1]["rmse"]
