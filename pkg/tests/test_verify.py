import sys
import os
import json
import pytest
import numpy as np
from unittest.mock import MagicMock, patch

# Add project root to path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.cli_io import build_initial_state
from src.dynamics import Termination
from src.peakon import TestFunctionSet, peakon_speed
from src.utils.config_loader import config_from_dict
from src.utils.errors import NumericalFailureError
from src.verify import (
    FAIL,
    FOCUSING_FAMILIES,
    NOT_APPLICABLE,
    PASS,
    Verifier,
    coherence_failure,
    default_protocol,
    focusing_suite,
    verify,
)

# --- Fixtures ---

@pytest.fixture
def mock_logger():
    return MagicMock()

@pytest.fixture
def case2_config():
    return config_from_dict({
        "scenario": {"kind": "case2", "name": "case2-verify"},
        "grid": {"n_points": 64},
        "sim": {"dt": 1e-3, "t_end": 0.02},
    })

@pytest.fixture
def peakon_config():
    return config_from_dict({
        "scenario": {"kind": "peakon", "name": "peakon-verify", "n_components": 2},
        "grid": {"n_points": 256, "length": 60.0},
        "sim": {"dt": 1e-3, "t_end": 0.5},
        "initial": {"family": "peakon", "p": [1.0, 2.0], "q": [0.5, 1.0], "x0": 25.0, "sigma_cells": 3.0},
        "weak_form": {"tests": 3, "horizon": 0.5, "time_slices": 64, "tolerance": 1e-5},
    })

def blowup_series(t_break=1.0, samples=200, initial=-0.5):
    """Monitor shaped like initial / (1 - t / t_break), sampled up to just before t_break."""
    times = np.linspace(0.0, 0.999 * t_break, samples)
    return times, initial / (1.0 - times / t_break)

# --- Tests ---

def test_default_protocol_is_valid():
    quick = default_protocol(quick=True)
    full = default_protocol()

    assert quick.scenario.kind == "gx"
    assert quick.grid.n_points == 256 and full.grid.n_points == 512
    assert full.initial.n_widths == [1.5]

def test_default_protocol_bumps_interact():
    """The two momenta overlap, so the nonlinear terms are far from round-off."""
    state = build_initial_state(default_protocol(quick=True))

    assert np.max(np.abs(state.u * state.v)) >= 0.1

def test_focusing_suite_caps_relative_to_data():
    entries = focusing_suite(quick=True)

    assert len(entries) == len(FOCUSING_FAMILIES) >= 5
    assert {state.reduction.value for _, state, _ in entries} >= {"gx", "case1", "case2"}
    for (label, state, sim), family in zip(entries, FOCUSING_FAMILIES):
        assert label == family.label
        assert sim.blowup_linf_cap == pytest.approx(family.cap_factor * state.linf())
        assert sim.t_end == family.t_end
        assert np.min(state.m) < 0 < np.max(state.m)

def test_focusing_data_is_not_odd():
    """The positive bump tilts every datum, so m is not antisymmetric about the bump center."""
    for _, state, _ in focusing_suite(quick=True):
        m = state.m[0]

        assert np.max(m) > 1.1 * abs(np.min(m))

def test_coherence_accepts_late_deep_minimum():
    times, values = blowup_series()

    assert coherence_failure(times, [values], capped=True, floor=-1e6) is None

def test_coherence_rejects_shallow_minimum():
    times = np.linspace(0.0, 1.0, 100)
    values = -0.5 * (1.0 + 2.0 * times)

    failure = coherence_failure(times, [values], capped=True, floor=-1e6)

    assert failure is not None and "initial" in failure

def test_coherence_rejects_early_minimum():
    times, values = blowup_series()
    values = values[::-1]

    assert coherence_failure(times, [values], capped=True, floor=-1e6) is not None

def test_coherence_needs_only_one_diverging_monitor():
    """A Wronskian maximum that grows (negated here) is enough when the drift stays bounded."""
    times, growing = blowup_series(initial=-0.2)
    bounded = np.full(times.size, -0.3)

    assert coherence_failure(times, [bounded, growing], capped=True, floor=-1e6) is None
    assert coherence_failure(times, [bounded, bounded], capped=True, floor=-1e6) is not None

def test_coherence_floor_applies_to_uncapped_runs():
    times = np.linspace(0.0, 1.0, 50)

    assert coherence_failure(times, [np.full(50, -2.0)], capped=False, floor=-10.0) is None
    assert "floor" in coherence_failure(times, [np.linspace(-2.0, -20.0, 50)], capped=False, floor=-10.0)

def test_coherence_criterion_checks_case2_wronskian(mock_logger):
    """The Case-2 run reports both the drift and the Wronskian depth."""
    class FakeSeries:
        def __init__(self, columns):
            self.columns = columns
            self.times = np.linspace(0.0, 1.0, 11)

        def column(self, name):
            return self.columns[name]

    times = np.linspace(0.0, 1.0, 11)
    growing = 0.1 / (1.001 - times)
    result = MagicMock()
    result.series = FakeSeries({
        "case1_min_uxv": -growing, "case1_min_uvx": -growing,
        "case2_min_drift": np.full(11, -0.4), "case2_max_wronskian": growing,
    })
    result.termination = Termination.BLOWUP_SUSPECTED

    with patch("src.verify.run_simulation", return_value=result):
        outcome = Verifier(quick=True, logger=mock_logger).blowup_coherence()

    assert outcome.status == PASS
    assert outcome.measured["case2_a8_min_drift_depth"] == pytest.approx(-1.0)
    assert outcome.measured["case2_a8_max_wronskian_depth"] <= -10.0
    assert outcome.measured["capped_runs"] == len(FOCUSING_FAMILIES)

def test_cross_form_criterion_passes(mock_logger):
    result = Verifier(quick=True, logger=mock_logger).cross_form()

    assert result.status == PASS
    assert result.measured["max_relative_error"] <= 1e-11

def test_peakon_criteria_not_applicable_to_smooth_config(case2_config, mock_logger):
    verifier = Verifier(case2_config, quick=True, logger=mock_logger)

    assert verifier.peakon_weak_form().status == NOT_APPLICABLE
    assert verifier.blowup_coherence().status == NOT_APPLICABLE

def test_failing_criterion_is_reported_not_raised(mock_logger, tmp_path):
    """Test that a library error inside a criterion becomes a FAIL entry."""
    with patch.object(Verifier, "cross_form", side_effect=NumericalFailureError("NaN in tendency for m_1")):
        report = verify(quick=True, only=["cross_form_rhs"], report_path=tmp_path / "report.json",
                        logger=mock_logger)

    assert report["passed"] is False
    assert report["criteria"][0]["status"] == FAIL
    assert "NumericalFailureError" in report["criteria"][0]["detail"]
    assert json.loads((tmp_path / "report.json").read_text())["passed"] is False

def test_only_filters_criteria(mock_logger):
    report = verify(quick=True, only=["cross_form_rhs"], logger=mock_logger)

    assert [c["name"] for c in report["criteria"]] == ["cross_form_rhs"]
    assert report["passed"]

@pytest.mark.slow
def test_quick_conservation_and_determinism(mock_logger, tmp_path):
    report = verify(quick=True, only=["gx_conservation", "case1_conservation", "sign_preservation",
                                      "characteristic_flow", "determinism"],
                    report_path=tmp_path / "verify.json", logger=mock_logger)

    statuses = {c["name"]: c["status"] for c in report["criteria"]}
    assert statuses == {
        "gx_conservation": PASS,
        "case1_conservation": PASS,
        "sign_preservation": PASS,
        "characteristic_flow": PASS,
        "determinism": PASS,
    }

@pytest.mark.slow
def test_quick_peakon_weak_form(mock_logger):
    report = verify(quick=True, only=["peakon_weak_form"], logger=mock_logger)

    assert report["criteria"][0]["status"] == PASS

@pytest.mark.slow
def test_quick_order_of_accuracy(mock_logger):
    report = verify(quick=True, only=["order_of_accuracy"], logger=mock_logger)

    assert report["criteria"][0]["status"] == PASS
    assert 12.0 <= report["criteria"][0]["measured"]["ratio"] <= 20.0

@pytest.mark.slow
def test_doubled_dt_keeps_order_of_accuracy(mock_logger):
    cfg = default_protocol(quick=True)
    coarse = cfg.model_copy(update={"sim": cfg.sim.model_copy(update={"dt": 2 * cfg.sim.dt})})

    base = verify(cfg, quick=True, only=["gx_conservation"], logger=mock_logger)
    report = verify(coarse, quick=True, only=["gx_conservation", "order_of_accuracy"], logger=mock_logger)

    statuses = {c["name"]: c["status"] for c in report["criteria"]}
    drift = report["criteria"][0]["measured"]["relative_drift"]
    assert statuses["order_of_accuracy"] == PASS
    base_drift = base["criteria"][0]["measured"]["relative_drift"]
    # both at round-off below 1e-12
    assert drift >= base_drift or max(drift, base_drift) < 1e-12

def test_zero_data_passes_conservation_and_skips_peakons(mock_logger):
    cfg = config_from_dict({
        "scenario": {"kind": "gx", "name": "zero-verify"},
        "grid": {"n_points": 64, "length": 40.0},
        "sim": {"dt": 1e-2, "t_end": 0.1, "monitor_stride": 2},
        "initial": {"family": "zero"},
    })

    report = verify(cfg, quick=True, only=["gx_conservation", "case1_conservation", "sign_preservation",
                                           "peakon_weak_form", "peakon_speed", "periodic_peakon_speed",
                                           "blowup_coherence"], logger=mock_logger)

    statuses = {c["name"]: c["status"] for c in report["criteria"]}
    assert statuses == {
        "gx_conservation": PASS,
        "case1_conservation": PASS,
        "sign_preservation": PASS,
        "peakon_weak_form": NOT_APPLICABLE,
        "peakon_speed": NOT_APPLICABLE,
        "periodic_peakon_speed": NOT_APPLICABLE,
        "blowup_coherence": NOT_APPLICABLE,
    }
    assert report["passed"]

def test_peakon_speed_reads_amplitudes_and_domain_from_config(peakon_config, mock_logger):
    verifier = Verifier(peakon_config, logger=mock_logger)
    c = peakon_speed(verifier._peakon_setup("line_truncated")[0])

    with patch.object(Verifier, "_peakon_run_speed", return_value=c) as run_speed:
        result = verifier.peakon_propagation()

    ladder = [call.args[1] for call in run_speed.call_args_list]
    spec, _, length, t_end, dt, cells = run_speed.call_args.args
    assert ladder == [64, 128, 256]
    assert spec.p == (1.0, 2.0) and spec.q == (0.5, 1.0) and spec.x0 == 25.0
    assert (length, t_end, cells) == (60.0, 0.5, 3.0)
    assert dt <= 0.1 * (60.0 / 256) / c
    assert result.measured["relative_error_finest"] == 0.0
    assert "monotone" in result.measured

def test_periodic_speed_not_applicable_to_line_config(peakon_config, mock_logger):
    assert Verifier(peakon_config, logger=mock_logger).periodic_peakon().status == NOT_APPLICABLE

def test_weak_form_uses_configured_test_family(peakon_config, mock_logger):
    verifier = Verifier(peakon_config, logger=mock_logger)

    with patch.object(TestFunctionSet, "random", wraps=TestFunctionSet.random) as random_tests:
        result = verifier.peakon_weak_form()

    args = random_tests.call_args.args
    assert args[1] == 3
    assert args[3:] == (0.5, 60.0, 64)
    assert result.tolerance["max_residual"] == 1e-5
