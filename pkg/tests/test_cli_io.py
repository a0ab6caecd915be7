import sys
import os
import json
import logging
import pytest
import numpy as np
import pandas as pd
from unittest.mock import MagicMock, patch

# Add project root to path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.blowup import MONITOR_COLUMNS
from src.cli_io import (
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_NUMERICAL,
    EXIT_OK,
    build_initial_state,
    emit_plots,
    peakon_check,
    run_scenario,
    snapshot_frame,
)
from src.dynamics import ReductionKind
from src.main import main
from src.utils.config_loader import config_from_dict
from src.utils.errors import ArtifactIOError, NumericalFailureError

# --- Fixtures ---

@pytest.fixture
def mock_logger():
    return MagicMock()

@pytest.fixture
def small_config():
    return config_from_dict({
        "scenario": {"kind": "gx", "name": "small"},
        "grid": {"n_points": 64, "length": 40.0},
        "sim": {"dt": 1e-3, "t_end": 0.05, "monitor_stride": 5},
        "output": {"snapshot_times": [0.02]},
        "flow": {"enabled": True},
    })

@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "small.conf"
    path.write_text(
        'scenario.kind = "case2"\n'
        'scenario.name = "cli"\n'
        'grid.n_points = 64\n'
        'sim.dt = 1.0e-3\n'
        'sim.t_end = 0.02\n'
    )
    return path

# --- Tests ---

def test_run_scenario_writes_artifacts(small_config, tmp_path, mock_logger):
    outcome = run_scenario(small_config, tmp_path / "run", logger=mock_logger)

    assert outcome.exit_code == EXIT_OK
    assert outcome.termination == "t_end"
    run_dir = tmp_path / "run"
    for name in ("monitors.csv", "manifest.json", "flow.csv", "snapshots/snapshot_final.csv",
                 "snapshots/snapshot_t0.020000.csv"):
        assert (run_dir / name).exists(), name

    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["termination"] == "t_end"
    assert manifest["exit_code"] == 0
    assert manifest["steps"] == 50
    assert manifest["config"]["grid"]["n_points"] == 64

def test_monitor_csv_layout(small_config, tmp_path, mock_logger):
    run_scenario(small_config, tmp_path / "run", logger=mock_logger)

    frame = pd.read_csv(tmp_path / "run" / "monitors.csv")

    assert list(frame.columns[:len(MONITOR_COLUMNS)]) == MONITOR_COLUMNS
    assert len(frame) == 11
    assert frame["H"].notna().all()
    assert frame["case2_min_drift"].isna().all()

def test_run_log_written_for_real_logger(small_config, tmp_path):
    logger = logging.getLogger("test-run-log")
    logger.setLevel(logging.INFO)

    run_scenario(small_config, tmp_path / "run", logger=logger)

    text = (tmp_path / "run" / "run.log").read_text()
    assert "Run Summary" in text
    assert not any(isinstance(h, logging.FileHandler) for h in logger.handlers)

def test_runs_are_bit_identical(small_config, tmp_path, mock_logger):
    """Test that two runs of the same scenario write byte-identical monitors."""
    run_scenario(small_config, tmp_path / "a", logger=mock_logger)
    run_scenario(small_config, tmp_path / "b", logger=mock_logger)

    first = (tmp_path / "a" / "monitors.csv").read_bytes()
    second = (tmp_path / "b" / "monitors.csv").read_bytes()
    assert first == second

def test_snapshot_frame_columns(small_config):
    state = build_initial_state(small_config)

    frame = snapshot_frame(state)

    assert list(frame.columns) == ["x", "m_1", "n_1", "u_1", "v_1"]
    assert len(frame) == 64

def test_reduced_initial_state_sums_bumps():
    cfg = config_from_dict({
        "scenario": {"kind": "case1"},
        "grid": {"n_points": 64},
        "initial": {"m_amplitudes": [1.0, 2.0], "m_centers": [10.0, 30.0], "m_widths": [1.0, 1.0]},
    })

    state = build_initial_state(cfg)

    assert state.reduction is ReductionKind.CASE1
    assert state.n_components == 2
    assert np.max(state.m[0]) == pytest.approx(2.0, rel=1e-2)
    np.testing.assert_array_equal(state.m[0], state.n[1])

def test_initial_state_from_file(tmp_path):
    grid_x = np.arange(64) * 40.0 / 64
    pd.DataFrame({
        "x": grid_x,
        "m_1": np.exp(-(grid_x - 20.0) ** 2), "m_2": np.zeros(64),
        "n_1": np.ones(64), "n_2": np.full(64, 0.5),
    }).to_csv(tmp_path / "data.csv", index=False)
    cfg = config_from_dict({
        "scenario": {"kind": "general", "n_components": 2},
        "grid": {"n_points": 64},
        "initial": {"family": "file", "file": "data.csv"},
    }, tmp_path)

    state = build_initial_state(cfg, tmp_path)

    assert state.n_components == 2
    np.testing.assert_allclose(state.n[1], 0.5)

def test_numerical_failure_exit_code(small_config, tmp_path, mock_logger):
    with patch('src.cli_io.run_simulation', side_effect=NumericalFailureError("NaN in tendency for m_1", component=0)):
        outcome = run_scenario(small_config, tmp_path / "run", logger=mock_logger)

    assert outcome.exit_code == EXIT_NUMERICAL
    manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
    assert manifest["termination"] == "numerical_failure"
    assert "NumericalFailureError" in manifest["error"]

def test_unwritable_run_dir_exit_code(small_config, tmp_path, mock_logger):
    blocker = tmp_path / "blocker"
    blocker.write_text("not a directory")

    outcome = run_scenario(small_config, blocker / "run", logger=mock_logger)

    assert outcome.exit_code == EXIT_IO

def test_emit_plots_writes_time_value_pairs(small_config, tmp_path, mock_logger):
    run_scenario(small_config, tmp_path / "run", logger=mock_logger)

    written = emit_plots(tmp_path / "run", logger=mock_logger)

    names = {p.name for p in written}
    assert "linf_max.csv" in names and "H.csv" in names
    assert "case2_min_drift.csv" not in names
    frame = pd.read_csv(tmp_path / "run" / "plots" / "linf_max.csv")
    assert list(frame.columns) == ["time", "value"]

def test_emit_plots_missing_run(tmp_path, mock_logger):
    with pytest.raises(ArtifactIOError):
        emit_plots(tmp_path / "nowhere", logger=mock_logger)

def test_peakon_check_report(tmp_path, mock_logger):
    cfg = config_from_dict({
        "scenario": {"kind": "peakon", "n_components": 1, "seed": 3},
        "grid": {"n_points": 256, "length": 80.0},
        "initial": {"family": "peakon", "p": [1.0], "q": [1.0], "x0": 20.0},
        "weak_form": {"tests": 5},
    })

    report = peakon_check(cfg, tmp_path / "peakon", logger=mock_logger)

    assert report["speed"] == pytest.approx(1.0)
    assert report["passed"]
    assert (tmp_path / "peakon" / "weak_residual.csv").exists()
    assert (tmp_path / "peakon" / "peakon_check.json").exists()

def test_cli_simulate(config_file, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)

    code = main(["simulate", str(config_file), "--out", str(tmp_path / "cli-run")])

    assert code == EXIT_OK
    assert (tmp_path / "cli-run" / "monitors.csv").exists()

def test_cli_invalid_config_exit_code(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    bad = tmp_path / "bad.conf"
    bad.write_text("grid.n_points = 4\nsim.colour = 3\n")

    assert main(["simulate", str(bad)]) == EXIT_CONFIG

def test_cli_emit_plots_missing_dir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)

    assert main(["emit-plots", str(tmp_path / "missing")]) == EXIT_IO

def test_cli_without_command_prints_help(capsys):
    assert main([]) == 0
    assert "simulate" in capsys.readouterr().out
