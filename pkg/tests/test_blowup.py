import sys
import os
import pytest
import numpy as np

# Add project root to path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.blowup import (
    MONITOR_COLUMNS,
    MonitorSeries,
    case1_observer,
    case2_observer,
    detect_divergence,
    monitor_case1,
    monitor_case2,
    monitor_general,
    offline_accumulator,
)
from src.dynamics import make_reduction, make_state, run_simulation
from src.grid_spectral import PeriodicGrid, derivative, helmholtz_invert
from src.utils.config_loader import DetectionPolicy, SimConfig
from src.utils.errors import InsufficientDataError

# --- Fixtures ---

@pytest.fixture
def grid():
    return PeriodicGrid(128, 40.0)

@pytest.fixture
def bumps(grid):
    x = grid.nodes
    return grid.field(np.exp(-(x - 17.0) ** 2)), grid.field(0.8 * np.exp(-((x - 23.0) / 1.5) ** 2))

def focusing_series(n_samples=40, blowup_time=1.0, t_stop=0.99):
    """Synthetic series whose monitors behave like -1/(T - t) near T."""
    series = MonitorSeries()
    for t in np.linspace(0.0, t_stop, n_samples):
        series.append(
            t,
            linf_max=1.0 / (blowup_time - t),
            general_accum=0.0,
            case1_min_uxv=-1.0 / (blowup_time - t) ** 2,
            case1_min_uvx=-0.5,
        )
    return series

def random_trig(grid, rng, modes=5):
    """Random low-mode trigonometric polynomial and its exact derivative at the nodes."""
    x = grid.nodes
    values, slope = np.full(grid.n_points, rng.normal()), np.zeros(grid.n_points)
    for j in range(1, modes + 1):
        k = 2 * np.pi * j / grid.length
        a, b = rng.normal(size=2)
        values += a * np.cos(k * x) + b * np.sin(k * x)
        slope += k * (b * np.cos(k * x) - a * np.sin(k * x))
    return grid.field(values), slope

def quiet_series(n_samples=40):
    series = MonitorSeries()
    for t in np.linspace(0.0, 1.0, n_samples):
        series.append(t, linf_max=1.0, general_accum=t, case1_min_uxv=-0.1 - 0.01 * np.sin(t))
    return series

# --- Tests ---

def test_series_requires_increasing_times():
    series = MonitorSeries()
    series.append(0.0, linf_max=1.0)

    with pytest.raises(ValueError):
        series.append(0.0, linf_max=2.0)

def test_series_frame_keeps_fixed_columns_first():
    series = MonitorSeries()
    series.append(0.0, linf_max=1.0, custom=2.0)

    frame = series.to_frame()

    assert list(frame.columns[:len(MONITOR_COLUMNS)]) == MONITOR_COLUMNS
    assert "custom" in frame.columns
    assert np.isnan(frame.loc[0, "H"])

def test_series_frame_round_trip():
    series = focusing_series(5)

    restored = MonitorSeries.from_frame(series.to_frame())

    np.testing.assert_array_equal(restored.times, series.times)
    np.testing.assert_array_equal(restored.column("case1_min_uxv"), series.column("case1_min_uxv"))
    assert not restored.has("H")

def test_accumulator_is_trapezoidal(grid):
    """Constant sup norm c gives a running integral c^2 t."""
    series = MonitorSeries()
    state = make_state(grid, [np.full(grid.n_points, 2.0)], [np.ones(grid.n_points)])
    for t in (0.0, 0.5, 1.5):
        monitor_general(make_state(grid, state.m, state.n, t), series)

    np.testing.assert_allclose(series.general_accum, [0.0, 2.0, 6.0])
    np.testing.assert_allclose(series.linf_max, 2.0)

def test_accumulator_matches_offline_recomputation(bumps):
    m, n = bumps
    result = run_simulation(make_reduction("gx", m, n), SimConfig(dt=1e-3, t_end=0.2, monitor_stride=10))
    series = result.series

    offline = offline_accumulator(series.times, series.linf_max)

    np.testing.assert_allclose(series.general_accum, offline, rtol=1e-12)

def test_accumulator_is_additive_across_restarts(bumps):
    m, n = bumps
    state = make_reduction("gx", m, n)
    whole = run_simulation(state, SimConfig(dt=1e-3, t_end=0.2, monitor_stride=10))
    first = run_simulation(state, SimConfig(dt=1e-3, t_end=0.1, monitor_stride=10))
    second = run_simulation(first.state, SimConfig(dt=1e-3, t_end=0.2, monitor_stride=10), series=first.series)

    assert len(second.series) == len(whole.series)
    assert second.series.general_accum[-1] == pytest.approx(whole.series.general_accum[-1], rel=1e-10)

def test_case1_monitor_values(grid, bumps):
    m, n = bumps
    u, v = helmholtz_invert(m), helmholtz_invert(n)

    min_uxv, min_uvx = monitor_case1(u, v)

    assert min_uxv == pytest.approx(np.min(derivative(u).samples * v.samples))
    assert min_uvx == pytest.approx(np.min(u.samples * derivative(v).samples))

def test_case2_monitor_values(grid, bumps):
    m, n = bumps
    u, v = helmholtz_invert(m), helmholtz_invert(n)
    ux, vx = derivative(u).samples, derivative(v).samples

    min_drift, max_wronskian = monitor_case2(u, v)

    assert min_drift == pytest.approx(np.min(u.samples * ux + v.samples * vx))
    assert max_wronskian == pytest.approx(np.max(np.abs(ux * v.samples - u.samples * vx)))

@pytest.mark.parametrize("seed", range(10))
def test_case_monitors_match_pointwise_scan(grid, seed):
    """Scan every node with exact derivatives and compare with both case monitors."""
    rng = np.random.default_rng(seed)
    u, ux = random_trig(grid, rng)
    v, vx = random_trig(grid, rng)

    min_uxv = min_uvx = min_drift = np.inf
    max_wronskian = 0.0
    for k in range(grid.n_points):
        uk, vk = u.samples[k], v.samples[k]
        min_uxv = min(min_uxv, ux[k] * vk)
        min_uvx = min(min_uvx, uk * vx[k])
        min_drift = min(min_drift, uk * ux[k] + vk * vx[k])
        max_wronskian = max(max_wronskian, abs(ux[k] * vk - uk * vx[k]))

    case1 = monitor_case1(u, v)
    case2 = monitor_case2(u, v)

    assert case1[0] == pytest.approx(min_uxv, rel=1e-10, abs=1e-12)
    assert case1[1] == pytest.approx(min_uvx, rel=1e-10, abs=1e-12)
    assert case2[0] == pytest.approx(min_drift, rel=1e-10, abs=1e-12)
    assert case2[1] == pytest.approx(max_wronskian, rel=1e-10, abs=1e-12)

def test_observers_read_back_reduced_pair(bumps):
    m, n = bumps
    u, v = helmholtz_invert(m), helmholtz_invert(n)

    case1 = case1_observer(make_reduction("case1", m, n))
    case2 = case2_observer(make_reduction("case2", m, n))

    assert case1["case1_min_uxv"] == pytest.approx(monitor_case1(u, v)[0])
    assert case2["case2_max_wronskian"] == pytest.approx(monitor_case2(u, v)[1])

def test_detects_focusing_monitor():
    """Test that a -1/(T - t)^2 monitor trips the divergence flag."""
    series = focusing_series()

    flags = detect_divergence(series, DetectionPolicy(magnitude=100.0, rate=100.0, window=10))

    assert "case1_min_uxv_divergence" in flags
    assert "case1_min_uvx_divergence" not in flags
    assert flags <= series.flags

def test_linf_cap_flag():
    series = focusing_series()

    flags = detect_divergence(series, DetectionPolicy(window=10), linf_cap=50.0)

    assert "linf_cap" in flags

def test_quiet_series_raises_no_flags():
    series = quiet_series()

    flags = detect_divergence(series, DetectionPolicy(window=10), linf_cap=10.0)

    assert flags == set()
    assert series.flags == set()

def test_default_magnitude_scales_with_initial_data():
    """The unset magnitude is a multiple of max(|monitor(0)|, linf(0)^2)."""
    series = focusing_series()

    strict = detect_divergence(series, DetectionPolicy(magnitude_factor=10.0, rate=100.0, window=10))
    lenient = detect_divergence(MonitorSeries.from_frame(series.to_frame()),
                                DetectionPolicy(magnitude_factor=1e6, rate=100.0, window=10))

    assert "case1_min_uxv_divergence" in strict
    assert "case1_min_uxv_divergence" not in lenient

def test_detection_needs_a_full_window():
    series = focusing_series(n_samples=5)

    with pytest.raises(InsufficientDataError):
        detect_divergence(series, DetectionPolicy(window=20))

def test_offline_accumulator_on_known_data():
    times = np.array([0.0, 1.0, 3.0])
    linf = np.array([1.0, 1.0, 3.0])

    np.testing.assert_allclose(offline_accumulator(times, linf), [0.0, 1.0, 11.0])
