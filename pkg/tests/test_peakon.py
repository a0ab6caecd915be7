import sys
import os
import pytest
import numpy as np

# Add project root to path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.dynamics import ReductionKind
from src.grid_spectral import PeriodicGrid
from src.peakon import (
    PERIODIC_SPEED_FACTOR,
    PeakonCandidate,
    PeakonSpec,
    SampledCandidate,
    SpaceProfile,
    TestFunctionSet,
    TimeProfile,
    mollified_peakon_momentum,
    peakon_profile,
    peakon_speed,
    sample_peakon,
    track_peak,
    weak_residual,
)
from src.utils.errors import SeamCrossingError, UnderResolvedError

# --- Fixtures ---

@pytest.fixture
def line_spec():
    return PeakonSpec((1.0, 2.0), (3.0, 4.0), x0=20.0)

@pytest.fixture
def periodic_spec():
    return PeakonSpec((1.0,), (1.0,), x0=0.5, flavor="periodic_unit")

@pytest.fixture
def rng():
    return np.random.default_rng(7)

def moving_frames(grid, speed, times, x0, noise=0.0, rng=None):
    frames = []
    for t in times:
        d = np.mod(grid.nodes - x0 - speed * t + 0.5 * grid.length, grid.length) - 0.5 * grid.length
        values = np.exp(-np.abs(d))
        if noise:
            values = values + noise * rng.standard_normal(grid.n_points)
        frames.append(grid.field(values))
    return frames

# --- Tests ---

def test_line_speed_is_sum_of_products(line_spec):
    assert peakon_speed(line_spec) == pytest.approx(11.0)

def test_periodic_speed_has_cosh_factor(periodic_spec):
    assert peakon_speed(periodic_spec) == pytest.approx(np.cosh(0.5) ** 2)
    assert PERIODIC_SPEED_FACTOR == pytest.approx(1.2715403, rel=1e-7)

def test_opposite_products_give_stationary_peakon():
    spec = PeakonSpec((1.0, 1.0), (1.0, -1.0))

    assert peakon_speed(spec) == 0.0

def test_speed_is_permutation_invariant_and_quadratic(line_spec):
    swapped = PeakonSpec((2.0, 1.0), (4.0, 3.0), x0=20.0)
    scaled = PeakonSpec((2.0, 4.0), (6.0, 8.0), x0=20.0)

    assert peakon_speed(swapped) == pytest.approx(peakon_speed(line_spec))
    assert peakon_speed(scaled) == pytest.approx(4 * peakon_speed(line_spec))

def test_spec_rejects_mismatched_amplitudes():
    with pytest.raises(ValueError):
        PeakonSpec((1.0, 2.0), (1.0,))

def test_sample_peakon_values(line_spec):
    grid = PeriodicGrid(800, 80.0)

    u, v = sample_peakon(line_spec, grid, t=1.0)

    peak = int(round(31.0 / grid.spacing))
    assert u[1].samples[peak] == pytest.approx(2.0)
    assert v[0].samples[peak] == pytest.approx(3.0)
    assert u[0].samples[peak + 10] == pytest.approx(np.exp(-1.0))

def test_periodic_profile_derivative_jump(periodic_spec):
    """u_x jumps by -2 p sinh(1/2) across the crest."""
    eps = 1e-9
    f, fx = peakon_profile(periodic_spec, np.array([0.5 - eps, 0.5 + eps]), 0.5)

    assert f[0] == pytest.approx(np.cosh(0.5))
    assert fx[1] - fx[0] == pytest.approx(-2 * np.sinh(0.5), rel=1e-6)

def test_periodic_sampling_needs_unit_length(periodic_spec):
    with pytest.raises(ValueError):
        sample_peakon(periodic_spec, PeriodicGrid(64, 2.0))

def test_mollifier_rejects_under_resolved_width(line_spec):
    grid = PeriodicGrid(512, 80.0)

    with pytest.raises(UnderResolvedError):
        mollified_peakon_momentum(line_spec, grid, sigma=grid.spacing)

@pytest.mark.parametrize("cells", [2.0, 4.0, 8.0])
def test_mollified_velocity_converges_to_peakon(cells):
    """Smaller mollifiers reproduce the exact profile more closely."""
    spec = PeakonSpec((1.0,), (0.5,), x0=20.0)
    grid = PeriodicGrid(1024, 40.0)

    state = mollified_peakon_momentum(spec, grid, sigma=cells * grid.spacing)
    exact_u, _ = sample_peakon(spec, grid)

    error = np.max(np.abs(state.u[0] - exact_u[0].samples))
    assert state.reduction is ReductionKind.GX
    assert error <= cells * grid.spacing

def test_mollified_multi_component_state(line_spec):
    grid = PeriodicGrid(1024, 80.0)

    state = mollified_peakon_momentum(line_spec, grid)

    assert state.n_components == 2
    assert state.reduction is ReductionKind.GENERAL
    np.testing.assert_allclose(2 * state.u[0], state.u[1], atol=1e-12)

def test_space_profile_is_compact():
    profile = SpaceProfile(center=5.0, radius=2.0)

    psi, psi_x, psi_xx = profile.evaluate(np.array([2.0, 3.0, 5.0, 7.5]))

    assert psi[0] == 0.0 and psi[1] == 0.0 and psi[3] == 0.0
    assert psi[2] == pytest.approx(np.exp(-1.0))
    assert psi_x[2] == pytest.approx(0.0)

def test_space_profile_derivatives_match_finite_differences():
    profile = SpaceProfile(center=0.0, radius=1.5)
    x = np.linspace(-1.2, 1.2, 13)
    h = 1e-5

    psi, psi_x, psi_xx = profile.evaluate(x)
    plus = profile.evaluate(x + h)
    minus = profile.evaluate(x - h)

    np.testing.assert_allclose(psi_x, (plus[0] - minus[0]) / (2 * h), atol=1e-7)
    np.testing.assert_allclose(psi_xx, (plus[1] - minus[1]) / (2 * h), atol=1e-6)

def test_random_tests_meet_the_trajectory(line_spec, rng):
    tests = TestFunctionSet.random(rng, 20, line_spec, horizon=1.0, length=80.0)

    assert len(tests) == 20
    for space in tests.space:
        a, b = space.support()
        assert a > 0.0 and b < 80.0
        assert b > 18.0 and a < 33.0

def test_simpson_slices_follow_peak_travel(line_spec):
    """At c = 11 the peak crosses eleven unit radii in unit time, so 200 slices per radius are needed."""
    candidate = PeakonCandidate(line_spec, length=80.0)

    assert candidate.time_nodes(1.0, 200, 1.0).size == 2201
    assert candidate.time_nodes(1.0, 200, 4.0).size == 551
    assert candidate.time_nodes(1.0, 5000, 1.0).size == 5001

def test_simpson_slices_are_even_and_floor_at_configured():
    stationary = PeakonCandidate(PeakonSpec((1.0, 1.0), (1.0, -1.0)), length=80.0)

    assert stationary.time_nodes(2.0, 201, 1.0).size == 203
    assert stationary.time_nodes(2.0, 64, 1.0)[-1] == pytest.approx(2.0)

def test_exact_peakon_satisfies_weak_form(line_spec, rng):
    """Test that the exact N = 2 peakon at speed 11 has a negligible weak residual."""
    tests = TestFunctionSet.random(rng, 20, line_spec, horizon=1.0, length=80.0, time_slices=400)

    exact = weak_residual(PeakonCandidate(line_spec, length=80.0), tests)
    perturbed = weak_residual(PeakonCandidate(line_spec, speed=1.1 * 11.0, length=80.0), tests)

    assert exact.values.shape == (20, 2, 2)
    assert exact.max_abs <= 1e-6
    assert perturbed.max_abs >= 10 * exact.max_abs

def test_single_component_peakon_weak_form(rng):
    spec = PeakonSpec((1.0,), (1.0,), x0=20.0)
    tests = TestFunctionSet.random(rng, 10, spec, horizon=1.0, length=80.0)

    exact = weak_residual(PeakonCandidate(spec, length=80.0), tests)

    assert exact.max_abs <= 1e-6

def test_periodic_peakon_satisfies_weak_form(periodic_spec, rng):
    tests = TestFunctionSet.random(rng, 10, periodic_spec, horizon=1.0)

    exact = weak_residual(PeakonCandidate(periodic_spec), tests)
    line_speed = weak_residual(PeakonCandidate(periodic_spec, speed=1.0), tests)

    assert exact.max_abs <= 1e-6
    assert line_speed.max_abs >= 10 * exact.max_abs

def test_residual_frame_has_one_row_per_equation(line_spec, rng):
    tests = TestFunctionSet.random(rng, 3, line_spec, horizon=1.0, length=80.0)

    frame = weak_residual(PeakonCandidate(line_spec, length=80.0), tests).to_frame()

    assert len(frame) == 3 * 2 * 2
    assert set(frame["equation"]) == {"m_1", "m_2", "n_1", "n_2"}

def test_line_test_across_seam_raises(line_spec):
    tests = TestFunctionSet([SpaceProfile(1.0, 2.0)], [TimeProfile()])

    with pytest.raises(SeamCrossingError):
        weak_residual(PeakonCandidate(line_spec, length=80.0), tests)

def test_sampled_smooth_travelling_profile_is_not_a_weak_solution():
    """A smooth bump translated at an arbitrary speed leaves a clear residual."""
    grid = PeriodicGrid(256, 40.0)
    times = np.linspace(0.0, 1.0, 101)
    u = np.array([[np.exp(-(grid.nodes - 20.0 - 2.0 * t) ** 2)] for t in times])
    candidate = SampledCandidate(grid, times, u, u)
    # supports centred away from the midpoint of the path, where the residual cancels by symmetry
    tests = TestFunctionSet([SpaceProfile(19.5, 3.0), SpaceProfile(22.5, 3.0)], [TimeProfile(), TimeProfile()],
                            horizon=1.0, time_slices=100)

    residual = weak_residual(candidate, tests)

    assert residual.max_abs > 1e-3

def test_sampled_stationary_state_has_zero_residual():
    grid = PeriodicGrid(256, 40.0)
    times = np.linspace(0.0, 1.0, 11)
    zero = np.zeros((times.size, 1, grid.n_points))
    candidate = SampledCandidate(grid, times, zero, zero)
    tests = TestFunctionSet([SpaceProfile(20.0, 2.0)], [TimeProfile(0.3, 1.0, 0.2)], time_slices=10)

    assert weak_residual(candidate, tests).max_abs == 0.0

def test_track_peak_recovers_speed():
    grid = PeriodicGrid(512, 40.0)
    times = np.linspace(0.0, 2.0, 21)

    track = track_peak(moving_frames(grid, 0.7, times, 10.0), times)

    assert track.speed == pytest.approx(0.7, rel=2e-2)

def test_track_peak_unwraps_across_the_seam():
    grid = PeriodicGrid(512, 40.0)
    times = np.linspace(0.0, 2.0, 41)

    track = track_peak(moving_frames(grid, 5.0, times, 35.0), times)

    assert track.speed == pytest.approx(5.0, rel=1e-2)
    assert np.all(np.diff(track.positions) > 0)

def test_track_peak_stationary_and_noisy(rng):
    grid = PeriodicGrid(512, 40.0)
    times = np.linspace(0.0, 1.0, 21)

    still = track_peak(moving_frames(grid, 0.0, times, 20.0), times)
    noisy = track_peak(moving_frames(grid, 1.0, times, 15.0, noise=1e-3, rng=rng), times)

    assert abs(still.speed) <= 1e-10
    assert noisy.speed == pytest.approx(1.0, rel=0.02)

def test_track_peak_needs_two_frames():
    grid = PeriodicGrid(64, 40.0)

    with pytest.raises(ValueError):
        track_peak([grid.zeros()], [0.0])
