"""Peakon and periodic-peakon traveling waves, mollified initial data and weak-form residuals.

A single-peak wave shares one profile f across components:
u_i = p_i f(x - s(t)), v_i = q_i f(x - s(t)), with f = exp(-|xi|) on the line
and f = cosh(xi - floor(xi) - 1/2) for the unit-period flavor.

The weak residual never differentiates a candidate twice: momentum pairings
are rewritten by parts into u, u_x, v, v_x and test-function derivatives,
plus the regular part of u_jxx v_jx - u_jx v_jxx (zero for a shared profile).
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Literal, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import simpson
from scipy.special import roots_legendre

from src.dynamics import NovikovState, ReductionKind
from src.grid_spectral import (
    PeriodicGrid,
    RealField,
    fft_workers,
    helmholtz_multiply,
    smooth_gaussian,
    spectral_derivative,
)
from src.utils.errors import SeamCrossingError, UnderResolvedError

logger = logging.getLogger(__name__)

Flavor = Literal["line_truncated", "periodic_unit"]

PERIODIC_SPEED_FACTOR = float(np.cosh(0.5) ** 2)
LINE_TAIL_TOLERANCE = 1e-12
SLICES_PER_RADIUS = 200  # Simpson slices per test radius the peak travels


@dataclass(frozen=True)
class PeakonSpec:
    """Amplitudes (p_i, q_i), initial peak position and domain flavor."""

    p: Tuple[float, ...]
    q: Tuple[float, ...]
    x0: float = 0.0
    flavor: Flavor = "line_truncated"

    def __post_init__(self):
        p = tuple(float(a) for a in np.atleast_1d(self.p))
        q = tuple(float(a) for a in np.atleast_1d(self.q))
        if len(p) != len(q) or not p:
            raise ValueError(f"p and q need the same positive length, got {len(p)} and {len(q)}")
        if self.flavor not in ("line_truncated", "periodic_unit"):
            raise ValueError(f"unknown peakon flavor: {self.flavor}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "x0", float(self.x0))

    @property
    def n_components(self) -> int:
        return len(self.p)

    @property
    def period(self) -> Optional[float]:
        return 1.0 if self.flavor == "periodic_unit" else None

    @property
    def amplitude(self) -> float:
        return float(max(np.max(np.abs(self.p)), np.max(np.abs(self.q))))


def peakon_speed(spec: PeakonSpec) -> float:
    """c = sum p_j q_j on the line; cosh^2(1/2) times that for the unit-period wave."""
    c = float(np.dot(spec.p, spec.q))
    if spec.flavor == "periodic_unit":
        return PERIODIC_SPEED_FACTOR * c
    return c


def _wrap(x: np.ndarray, length: float) -> np.ndarray:
    """Signed offset in [-length/2, length/2)."""
    return np.mod(x + 0.5 * length, length) - 0.5 * length


def peakon_profile(spec: PeakonSpec, x: np.ndarray, peak: float,
                   length: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Shared profile f and its derivative f' at points x.

    Line profiles are wrapped onto a periodic domain of the given length when
    one is supplied; f' takes the right-hand value at the kink.
    """
    xi = np.asarray(x, dtype=float) - peak
    if spec.flavor == "periodic_unit":
        zeta = xi - np.floor(xi) - 0.5
        return np.cosh(zeta), np.sinh(zeta)
    if length is not None:
        xi = _wrap(xi, length)
    f = np.exp(-np.abs(xi))
    return f, -np.where(xi >= 0, 1.0, -1.0) * f


def _check_domain(spec: PeakonSpec, grid: PeriodicGrid):
    if spec.flavor == "periodic_unit" and grid.length != 1.0:
        raise ValueError(f"periodic_unit peakons need grid length 1, got {grid.length}")
    if spec.flavor == "line_truncated" and np.exp(-0.5 * grid.length) > LINE_TAIL_TOLERANCE:
        logger.warning(
            f"Domain length {grid.length:g} leaves a tail of {np.exp(-0.5 * grid.length):.1e} "
            f"at the seam (> {LINE_TAIL_TOLERANCE:g})"
        )


def peak_position(spec: PeakonSpec, t: float, speed: Optional[float] = None) -> float:
    c = peakon_speed(spec) if speed is None else speed
    return spec.x0 + c * t


def _grid_profile(spec: PeakonSpec, grid: PeriodicGrid, t: float) -> np.ndarray:
    _check_domain(spec, grid)
    peak = np.mod(peak_position(spec, t), grid.length)
    f, _ = peakon_profile(spec, grid.nodes, peak, grid.length)
    return f


def sample_peakon(spec: PeakonSpec, grid: PeriodicGrid, t: float = 0.0) -> Tuple[List[RealField], List[RealField]]:
    """
    Exact samples of u_i and v_i at time t, peak reduced modulo the domain.

    Returns:
        ([u_1..u_N], [v_1..v_N])
    """
    f = _grid_profile(spec, grid, t)
    u = [RealField(grid, p * f) for p in spec.p]
    v = [RealField(grid, q * f) for q in spec.q]
    return u, v


def profile_energy(spec: PeakonSpec, length: float) -> float:
    """Integral of f^2 + f'^2 over one domain: the cross energy of the wave per unit p_i q_i."""
    if spec.flavor == "periodic_unit":
        return float(np.sinh(1.0))
    return float(2.0 * (1.0 - np.exp(-length)))


def mollified_peakon_momentum(spec: PeakonSpec, grid: PeriodicGrid, t: float = 0.0,
                              sigma: Optional[float] = None) -> NovikovState:
    """
    Smooth solver-ready surrogate: m_i = p_i (1 - d^2/dx^2) g, n_i = q_i (1 - d^2/dx^2) g.

    g is the profile convolved with a Gaussian of width sigma, rescaled so that
    the integral of g^2 + g'^2 equals the exact profile's. Smoothing alone
    lowers the cross energy by O(sigma) and the wave then travels too slowly.

    Args:
        spec: Peakon to mollify
        grid: Target grid
        t: Profile time (also the state's time)
        sigma: Gaussian width, at least two grid cells (default four)

    Returns:
        NovikovState (tagged GX when N = 1)
    """
    sigma = 4.0 * grid.spacing if sigma is None else sigma
    if sigma < 2.0 * grid.spacing:
        raise UnderResolvedError(
            f"under-resolved mollifier: sigma={sigma:.3g} < 2*spacing={2.0 * grid.spacing:.3g}"
        )
    g = smooth_gaussian(grid, _grid_profile(spec, grid, t), sigma)
    gx = spectral_derivative(grid, g)
    g = g * np.sqrt(profile_energy(spec, grid.length) / (np.sum(g ** 2 + gx ** 2) * grid.spacing))
    profile_momentum = helmholtz_multiply(grid, g)
    m = np.outer(spec.p, profile_momentum)
    n = np.outer(spec.q, profile_momentum)
    reduction = ReductionKind.GX if spec.n_components == 1 else ReductionKind.GENERAL
    return NovikovState(grid, m, n, t, reduction)


# --- Test functions ---

@dataclass(frozen=True)
class SpaceProfile:
    """Compact bump exp(-1/(1 - r^2)), r = (x - center)/radius."""

    center: float
    radius: float

    def support(self) -> Tuple[float, float]:
        return self.center - self.radius, self.center + self.radius

    def evaluate(self, x: np.ndarray, period: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """psi, psi_x and psi_xx at x (distance wrapped when a period is given)."""
        d = np.asarray(x, dtype=float) - self.center
        if period is not None:
            d = _wrap(d, period)
        r = d / self.radius
        inside = np.abs(r) < 1.0
        psi = np.zeros_like(r)
        psi_x = np.zeros_like(r)
        psi_xx = np.zeros_like(r)
        ri = r[inside]
        s = 1.0 - ri ** 2
        g1 = -2.0 * ri / s ** 2
        g2 = -2.0 / s ** 2 - 8.0 * ri ** 2 / s ** 3
        value = np.exp(-1.0 / s)
        psi[inside] = value
        psi_x[inside] = value * g1 / self.radius
        psi_xx[inside] = value * (g2 + g1 ** 2) / self.radius ** 2
        return psi, psi_x, psi_xx


@dataclass(frozen=True)
class TimeProfile:
    """theta(t) = 1 + amplitude * sin(2 pi frequency t / horizon + phase)."""

    amplitude: float = 0.0
    frequency: float = 1.0
    phase: float = 0.0

    def evaluate(self, t: np.ndarray, horizon: float) -> Tuple[np.ndarray, np.ndarray]:
        omega = 2.0 * np.pi * self.frequency / horizon
        arg = omega * np.asarray(t, dtype=float) + self.phase
        return 1.0 + self.amplitude * np.sin(arg), self.amplitude * omega * np.cos(arg)


@dataclass
class TestFunctionSet:
    """Pairs phi_k(t, x) = theta_k(t) psi_k(x) with quadrature settings."""

    space: List[SpaceProfile]
    time: List[TimeProfile]
    horizon: float = 1.0
    time_slices: int = 200
    quad_nodes: int = 96

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if len(self.space) != len(self.time):
            raise ValueError("space and time profiles must pair up")
        if self.time_slices % 2:
            self.time_slices += 1

    def __len__(self) -> int:
        return len(self.space)

    @classmethod
    def random(cls, rng: np.random.Generator, count: int, spec: PeakonSpec, horizon: float = 1.0,
               length: Optional[float] = None, time_slices: int = 200) -> "TestFunctionSet":
        """Randomized family whose supports meet the peak trajectory over [0, horizon]."""
        if spec.flavor == "periodic_unit":
            centers = rng.uniform(0.0, 1.0, count)
            radii = rng.uniform(0.15, 0.45, count)
        else:
            start = spec.x0
            end = spec.x0 + peakon_speed(spec) * horizon
            lo, hi = min(start, end) - 2.0, max(start, end) + 2.0
            radii = rng.uniform(1.0, 4.0, count)
            centers = rng.uniform(lo, hi, count)
            if length is not None:
                centers = np.clip(centers, radii + 1e-6, length - radii - 1e-6)
        space = [SpaceProfile(float(c), float(r)) for c, r in zip(centers, radii)]
        time = [
            TimeProfile(float(a), float(f), float(ph))
            for a, f, ph in zip(rng.uniform(0.0, 0.5, count), rng.uniform(0.25, 1.5, count),
                                rng.uniform(0.0, 2 * np.pi, count))
        ]
        return cls(space, time, horizon, time_slices)


# --- Candidates ---

class SpaceSample(NamedTuple):
    x: np.ndarray
    weights: np.ndarray
    u: np.ndarray
    ux: np.ndarray
    v: np.ndarray
    vx: np.ndarray
    regular: Optional[np.ndarray]


class PeakonCandidate:
    """Analytic single-peak candidate; speed may be overridden for control runs."""

    def __init__(self, spec: PeakonSpec, speed: Optional[float] = None, length: Optional[float] = None,
                 quad_nodes: int = 96):
        self.spec = spec
        self.speed = peakon_speed(spec) if speed is None else float(speed)
        self.length = 1.0 if spec.flavor == "periodic_unit" else length
        self.period = spec.period
        self.test_period = None
        self.scale = max(1.0, spec.amplitude ** 3)
        self._nodes, self._weights = roots_legendre(quad_nodes)

    def time_nodes(self, horizon: float, slices: int, radius: float) -> np.ndarray:
        """Simpson nodes on [0, horizon], refined until the peak moves a small fraction of the test radius per slice."""
        travel = abs(self.speed) * horizon / radius
        slices = max(slices, int(np.ceil(SLICES_PER_RADIUS * travel)))
        slices += slices % 2
        return np.linspace(0.0, horizon, slices + 1)

    def _kinks(self, peak: float, a: float, b: float) -> np.ndarray:
        if self.length is None:
            candidates = [peak]
        else:
            step = self.length
            offsets = [0.0] if self.period is not None else [0.0, 0.5 * self.length]
            base = np.mod(peak, step)
            candidates = [
                base + off + k * step
                for off in offsets
                for k in range(int(np.floor((a - base - off) / step)), int(np.ceil((b - base - off) / step)) + 1)
            ]
        return np.array(sorted(k for k in candidates if a < k < b))

    def fields(self, index: int, t: float, support: Tuple[float, float]) -> SpaceSample:
        a, b = support
        peak = self.spec.x0 + self.speed * t
        edges = np.concatenate([[a], self._kinks(peak, a, b), [b]])
        xs, ws = [], []
        for left, right in zip(edges[:-1], edges[1:]):
            half = 0.5 * (right - left)
            xs.append(left + half * (self._nodes + 1.0))
            ws.append(half * self._weights)
        x = np.concatenate(xs)
        f, fx = peakon_profile(self.spec, x, peak, self.length)
        p = np.array(self.spec.p)[:, None]
        q = np.array(self.spec.q)[:, None]
        return SpaceSample(x, np.concatenate(ws), p * f, p * fx, q * f, q * fx, None)


class SampledCandidate:
    """Candidate given by grid samples of u_i, v_i at increasing times."""

    def __init__(self, grid: PeriodicGrid, times: Sequence[float], u: np.ndarray, v: np.ndarray,
                 periodic_tests: bool = False):
        self.grid = grid
        self.times = np.asarray(times, dtype=float)
        self.u = np.asarray(u, dtype=float)
        self.v = np.asarray(v, dtype=float)
        if self.u.shape != self.v.shape or self.u.shape[0] != self.times.size:
            raise ValueError("u and v need shape (n_times, N, n_points) matching times")
        self.period = grid.length if periodic_tests else None
        self.test_period = grid.length
        self.length = grid.length
        amplitude = float(max(np.max(np.abs(self.u)), np.max(np.abs(self.v))))
        self.scale = max(1.0, amplitude ** 3)

    @classmethod
    def from_states(cls, states: Sequence[NovikovState], periodic_tests: bool = False) -> "SampledCandidate":
        return cls(states[0].grid, [s.time for s in states],
                   np.array([s.u for s in states]), np.array([s.v for s in states]), periodic_tests)

    def time_nodes(self, horizon: float, slices: int, radius: float) -> np.ndarray:
        return self.times - self.times[0]

    def fields(self, index: int, t: float, support: Tuple[float, float]) -> SpaceSample:
        grid = self.grid
        u, v = self.u[index], self.v[index]
        d = spectral_derivative(grid, np.concatenate([u, v]))
        N = u.shape[0]
        ux, vx = d[:N], d[N:]
        dd = spectral_derivative(grid, np.concatenate([ux, vx]))
        uxx, vxx = dd[:N], dd[N:]
        regular = np.sum(uxx * vx - ux * vxx, axis=0)
        weights = np.full(grid.n_points, grid.spacing)
        return SpaceSample(grid.nodes, weights, u, ux, v, vx, regular)


# --- Weak residual ---

def _flux_pair(sample: SpaceSample, psi, psi_x, psi_xx, theta: float) -> Tuple[np.ndarray, np.ndarray]:
    """Spatial integrals of the nonlinear flux against phi = theta * psi, for every m_i and n_i."""
    u, ux, v, vx = sample.u, sample.ux, sample.v, sample.vx
    phi, phi_x, phi_xx = theta * psi, theta * psi_x, theta * psi_xx
    s_uv = np.sum(u * v, axis=0)
    s_uxv = np.sum(ux * v, axis=0)
    s_uvx = np.sum(u * vx, axis=0)
    s_uxvx = np.sum(ux * vx, axis=0)
    regular = 0.0 if sample.regular is None else sample.regular

    def density(w, wx, cross, same, sign):
        return (
            w * s_uv * phi_x
            + wx * (s_uxv + s_uvx) * phi_x
            + wx * s_uv * phi_xx
            - w * cross * phi
            - wx * s_uv * phi
            + w * same * phi
            - wx * (s_uxvx * phi + cross * phi_x)
            + 0.5 * (wx * s_uxvx * phi + w * s_uxvx * phi_x)
            - 0.5 * sign * w * regular * phi
        )

    flux_m = density(u, ux, s_uxv, s_uvx, 1.0) @ sample.weights
    flux_n = density(v, vx, s_uvx, s_uxv, -1.0) @ sample.weights
    return flux_m, flux_n


def _pairing(sample: SpaceSample, psi, psi_x) -> Tuple[np.ndarray, np.ndarray]:
    """Integral of m psi and n psi written as u psi + u_x psi_x."""
    return (sample.u * psi + sample.ux * psi_x) @ sample.weights, (sample.v * psi + sample.vx * psi_x) @ sample.weights


def _single_test(candidate, space: SpaceProfile, time: TimeProfile, horizon: float, slices: int) -> Tuple[np.ndarray, float]:
    if candidate.period is None and candidate.length is not None:
        a, b = space.support()
        if a < 0.0 or b > candidate.length:
            raise SeamCrossingError(
                f"test support [{a:.4g}, {b:.4g}] crosses the periodic seam of [0, {candidate.length:g}); "
                f"reposition the test"
            )
    times = candidate.time_nodes(horizon, slices, space.radius)
    theta, theta_t = time.evaluate(times, horizon)

    integrand = np.zeros((times.size, 2, candidate_components(candidate)))
    boundary = []
    support_width = 0.0
    for k, t in enumerate(times):
        sample = candidate.fields(k, t, space.support())
        psi, psi_x, psi_xx = space.evaluate(sample.x, candidate.test_period)
        flux_m, flux_n = _flux_pair(sample, psi, psi_x, psi_xx, theta[k])
        pair_m, pair_n = _pairing(sample, psi, psi_x)
        integrand[k, 0] = theta_t[k] * pair_m + flux_m
        integrand[k, 1] = theta_t[k] * pair_n + flux_n
        if k in (0, times.size - 1):
            boundary.append(theta[k] * np.array([pair_m, pair_n]))
        if k == 0:
            support_width = float((np.abs(psi) + np.abs(psi_x) + np.abs(psi_xx)) @ sample.weights)

    interior = simpson(integrand, x=times, axis=0)
    raw = interior - (boundary[1] - boundary[0])
    scale = support_width * float(np.max(np.abs(theta))) * candidate.scale
    return raw / scale, scale


def candidate_components(candidate) -> int:
    return candidate.spec.n_components if isinstance(candidate, PeakonCandidate) else candidate.u.shape[1]


@dataclass
class WeakResidual:
    """Normalized residuals with shape (n_tests, 2, N); axis 1 is (m-equation, n-equation)."""

    values: np.ndarray
    scales: np.ndarray
    tests: TestFunctionSet = field(repr=False)

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def per_test_max(self) -> np.ndarray:
        return np.max(np.abs(self.values), axis=(1, 2))

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for k, space in enumerate(self.tests.space):
            for e, equation in enumerate(("m", "n")):
                for i in range(self.values.shape[2]):
                    rows.append({
                        "test": k, "center": space.center, "radius": space.radius,
                        "equation": f"{equation}_{i + 1}", "residual": self.values[k, e, i],
                        "scale": self.scales[k],
                    })
        return pd.DataFrame(rows)


def weak_residual(candidate, tests: TestFunctionSet, workers: Optional[int] = None) -> WeakResidual:
    """
    Signed gap of the weak formulation for every test function and component equation.

    For phi = theta(t) psi(x) the residual is
        int_0^T [ int (u_i phi_t + u_ix phi_xt) + F_i(phi) ] dt - [ int (u_i phi + u_ix phi_x) ]_0^T
    with F_i the flux integral in first-derivative form, normalized by the
    test function's size and the cube of the candidate amplitude.

    Args:
        candidate: PeakonCandidate or SampledCandidate
        tests: Test functions and quadrature settings
        workers: Thread count for the map over tests (default NOVIKOV_THREADS)

    Returns:
        WeakResidual
    """
    workers = workers or fft_workers()

    def run(k: int) -> Tuple[np.ndarray, float]:
        return _single_test(candidate, tests.space[k], tests.time[k], tests.horizon, tests.time_slices)

    with ThreadPoolExecutor(max_workers=workers) as executor:
        results = list(executor.map(run, range(len(tests))))

    values = np.array([r[0] for r in results]).reshape(len(tests), 2, candidate_components(candidate))
    scales = np.array([r[1] for r in results])
    logger.debug(f"Weak residual over {len(tests)} tests: max {np.max(np.abs(values)) if values.size else 0.0:.3e}")
    return WeakResidual(values, scales, tests)


# --- Peak tracking ---

class PeakTrack(NamedTuple):
    times: np.ndarray
    positions: np.ndarray
    speed: float
    intercept: float


def refined_peak(grid: PeriodicGrid, samples: np.ndarray) -> float:
    """Argmax refined by a parabola through the three surrounding nodes."""
    k = int(np.argmax(samples))
    y_left = samples[(k - 1) % grid.n_points]
    y_mid = samples[k]
    y_right = samples[(k + 1) % grid.n_points]
    curvature = y_left - 2.0 * y_mid + y_right
    delta = 0.0 if curvature == 0.0 else float(np.clip(0.5 * (y_left - y_right) / curvature, -0.5, 0.5))
    return float(np.mod((k + delta) * grid.spacing, grid.length))


def track_peak(frames: Sequence, times: Sequence[float]) -> PeakTrack:
    """
    Fit the speed of a translating peak.

    Args:
        frames: RealFields (one grid) holding u at each time
        times: Frame times

    Returns:
        PeakTrack with unwrapped positions and the least-squares speed
    """
    times = np.asarray(times, dtype=float)
    if len(frames) != times.size or times.size < 2:
        raise ValueError("track_peak needs at least two frames with matching times")
    grid = frames[0].grid
    raw = np.array([refined_peak(grid, f.samples) for f in frames])
    positions = np.unwrap(raw, period=grid.length)
    speed, intercept = np.polyfit(times, positions, 1)
    return PeakTrack(times, positions, float(speed), float(intercept))
