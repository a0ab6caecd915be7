"""Multi-component Novikov dynamics: two RHS forms, RK4 stepping, characteristic flows.

The evolved variables are the 2N momentum densities M = (m_1..m_N, n_1..n_N);
velocities u_i, v_i are rebuilt by Helmholtz inversion on every evaluation.
Arrays are stacked as (2N, n_points) internally.
"""

import logging
import time as wallclock
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Callable, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from src.blowup import MonitorSeries, monitor_general
from src.grid_spectral import (
    PeriodicGrid,
    RealField,
    cubic_interpolate,
    helmholtz_solve,
    padded_grid,
    resample,
    spectral_derivative,
    trig_interpolate,
    truncate_two_thirds,
)
from src.utils.config_loader import SimConfig
from src.utils.errors import (
    ConfigError,
    HistoryRangeError,
    NonFiniteFieldError,
    NumericalFailureError,
    ObserverError,
)
from src.utils.logger import RunTracker

logger = logging.getLogger(__name__)

Observer = Callable[["NovikovState"], Optional[Mapping[str, float]]]


class ReductionKind(str, Enum):
    GENERAL = "general"
    GX = "gx"
    CASE1 = "case1"
    CASE2 = "case2"


class SpeedKind(str, Enum):
    GENERAL_A = "general_a"
    CASE1_2UV = "case1_2uv"
    CASE2_U2V2 = "case2_u2v2"


class Termination(str, Enum):
    T_END = "t_end"
    BLOWUP_SUSPECTED = "blowup_suspected"


def component_label(index: int, n_components: int) -> str:
    """Name of stacked component index: m_1..m_N then n_1..n_N."""
    if index < n_components:
        return f"m_{index + 1}"
    return f"n_{index - n_components + 1}"


@dataclass(frozen=True, eq=False)
class NovikovState:
    """The 2N momentum fields at one time. Immutable; velocities are derived on demand."""

    grid: PeriodicGrid
    m: np.ndarray
    n: np.ndarray
    time: float = 0.0
    reduction: ReductionKind = ReductionKind.GENERAL

    def __post_init__(self):
        m = np.array(self.m, dtype=float, ndmin=2)
        n = np.array(self.n, dtype=float, ndmin=2)
        if m.shape != n.shape or m.shape[1] != self.grid.n_points:
            raise ValueError(f"m and n must both have shape (N, {self.grid.n_points}); got {m.shape}, {n.shape}")
        if self.time < 0:
            raise ValueError(f"time must be >= 0, got {self.time}")
        stacked = np.concatenate([m, n])
        if not np.all(np.isfinite(stacked)):
            bad = int(np.argmax(~np.all(np.isfinite(stacked), axis=1)))
            raise NonFiniteFieldError(component_label(bad, m.shape[0]))
        m.flags.writeable = False
        n.flags.writeable = False
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "time", float(self.time))
        object.__setattr__(self, "reduction", ReductionKind(self.reduction))

    @property
    def n_components(self) -> int:
        return self.m.shape[0]

    @property
    def momentum(self) -> np.ndarray:
        return np.concatenate([self.m, self.n])

    @cached_property
    def u(self) -> np.ndarray:
        return helmholtz_solve(self.grid, self.m)

    @cached_property
    def v(self) -> np.ndarray:
        return helmholtz_solve(self.grid, self.n)

    def m_field(self, i: int) -> RealField:
        return RealField(self.grid, self.m[i])

    def n_field(self, i: int) -> RealField:
        return RealField(self.grid, self.n[i])

    def u_field(self, i: int) -> RealField:
        return RealField(self.grid, self.u[i])

    def v_field(self, i: int) -> RealField:
        return RealField(self.grid, self.v[i])

    def linf(self) -> float:
        """max over all 2N momentum fields of the sup norm."""
        return float(max(np.max(np.abs(self.m)), np.max(np.abs(self.n))))

    def with_momentum(self, stacked: np.ndarray, time: float) -> "NovikovState":
        N = self.n_components
        return NovikovState(self.grid, stacked[:N], stacked[N:], time, self.reduction)

    def shifted(self, cells: int) -> "NovikovState":
        """Translate every field by an integer number of grid cells."""
        return NovikovState(
            self.grid, np.roll(self.m, cells, axis=-1), np.roll(self.n, cells, axis=-1),
            self.time, self.reduction
        )


def make_state(grid: PeriodicGrid, m: Sequence, n: Sequence, time: float = 0.0) -> NovikovState:
    """Build a general N-component state from sequences of RealFields or arrays."""
    def _rows(fields):
        return np.array([f.samples if isinstance(f, RealField) else np.asarray(f, dtype=float) for f in fields])
    return NovikovState(grid, _rows(m), _rows(n), time, ReductionKind.GENERAL)


class Tendency(NamedTuple):
    dm: np.ndarray
    dn: np.ndarray

    @property
    def stacked(self) -> np.ndarray:
        return np.concatenate([self.dm, self.dn])


# --- Right-hand sides ---

PRODUCT_PADDING = 2


def _prepare_momentum(grid: PeriodicGrid, stacked: np.ndarray, dealias: bool) -> np.ndarray:
    if dealias:
        return truncate_two_thirds(grid, stacked)
    return stacked


def _product_grid(grid: PeriodicGrid, fields: np.ndarray, dealias: bool) -> Tuple[PeriodicGrid, np.ndarray]:
    """Grid the nonlinear products are formed on; 2N points keep cubic products of 2/3-band fields exact."""
    if not dealias:
        return grid, fields
    fine = padded_grid(grid, PRODUCT_PADDING)
    return fine, resample(fields, fine.n_points)


def _finish_tendency(grid: PeriodicGrid, tendency: np.ndarray, dealias: bool, time: float) -> np.ndarray:
    if dealias:
        tendency = truncate_two_thirds(grid, resample(tendency, grid.n_points))
    finite_rows = np.all(np.isfinite(tendency), axis=1)
    if not np.all(finite_rows):
        bad = int(np.argmin(finite_rows))
        N = tendency.shape[0] // 2
        raise NumericalFailureError(f"NaN in tendency for {component_label(bad, N)}", component=bad, time=time)
    return tendency


def _componentwise_stacked(grid: PeriodicGrid, stacked: np.ndarray, dealias: bool, time: float = 0.0) -> np.ndarray:
    M = _prepare_momentum(grid, stacked, dealias)
    U = helmholtz_solve(grid, M)
    d = spectral_derivative(grid, np.concatenate([U, M]))
    _, fields = _product_grid(grid, np.concatenate([M, U, d]), dealias)
    m, n, u, v, ux, vx, mx, nx = np.split(fields, 8)

    # index i on axis 0, summation index j on axis 1
    mi, ni, uxi, vxi, mxi, nxi, ui, vi = (a[:, None] for a in (m, n, ux, vx, mx, nx, u, v))
    uj, vj, uxj, vxj, mj, nj = (a[None, :] for a in (u, v, ux, vx, m, n))

    dm = np.sum(
        -2 * mi * uxj * vj - mi * uj * vxj - mxi * uj * vj - uxi * mj * vj + ui * mj * vxj,
        axis=1,
    )
    dn = np.sum(
        -2 * ni * uj * vxj - ni * uxj * vj - nxi * uj * vj - vxi * nj * uj + vi * nj * uxj,
        axis=1,
    )
    return _finish_tendency(grid, np.concatenate([dm, dn]), dealias, time)


@dataclass(frozen=True, eq=False)
class TransportForm:
    """Advection speed a = sum_j u_j v_j and the block-diagonal matrix B of M_t + a M_x = B M."""

    grid: PeriodicGrid
    a: np.ndarray
    b_blocks: np.ndarray

    @property
    def a_field(self) -> RealField:
        return RealField(self.grid, self.a)

    def entry(self, i: int, j: int) -> RealField:
        return RealField(self.grid, self.b_blocks[i, j])


def _assemble_transport(grid: PeriodicGrid, u, v, ux, vx) -> TransportForm:
    N = u.shape[0]
    a = np.sum(u * v, axis=0)
    b = np.zeros((2 * N, 2 * N, grid.n_points))
    b[:N, :N] = u[:, None] * vx[None, :] - ux[:, None] * v[None, :]
    b[N:, N:] = v[:, None] * ux[None, :] - vx[:, None] * u[None, :]
    diag_m = np.sum(2 * ux * v + u * vx, axis=0)
    diag_n = np.sum(2 * vx * u + v * ux, axis=0)
    idx = np.arange(N)
    b[idx, idx] -= diag_m
    b[N + idx, N + idx] -= diag_n
    return TransportForm(grid, a, b)


def build_transport(state: NovikovState) -> TransportForm:
    """Assemble a and B from the state's velocities and their spectral derivatives."""
    grid = state.grid
    ux = spectral_derivative(grid, state.u)
    vx = spectral_derivative(grid, state.v)
    return _assemble_transport(grid, state.u, state.v, ux, vx)


def _transport_stacked(grid: PeriodicGrid, stacked: np.ndarray, dealias: bool, time: float = 0.0) -> np.ndarray:
    N = stacked.shape[0] // 2
    M = _prepare_momentum(grid, stacked, dealias)
    U = helmholtz_solve(grid, M)
    d = spectral_derivative(grid, np.concatenate([U, M]))
    fine, fields = _product_grid(grid, np.concatenate([M, U, d]), dealias)
    M, U, Ux, Mx = np.split(fields, 4)
    form = _assemble_transport(fine, U[:N], U[N:], Ux[:N], Ux[N:])
    tendency = -form.a * Mx + np.einsum("ijx,jx->ix", form.b_blocks, M)
    return _finish_tendency(grid, tendency, dealias, time)


def _split(state: NovikovState, stacked: np.ndarray) -> Tendency:
    N = state.n_components
    return Tendency(stacked[:N], stacked[N:])


def rhs_componentwise(state: NovikovState, dealias: bool = True) -> Tendency:
    """Evaluate the double sums of the componentwise system directly."""
    return _split(state, _componentwise_stacked(state.grid, state.momentum, dealias, state.time))


def rhs_transport(state: NovikovState, dealias: bool = True) -> Tendency:
    """Evaluate -a M_x + B M from the matrix transport form."""
    return _split(state, _transport_stacked(state.grid, state.momentum, dealias, state.time))


RHS_FORMS = {
    "componentwise": _componentwise_stacked,
    "transport": _transport_stacked,
}


# --- Reductions ---

def _as_array(f) -> np.ndarray:
    return f.samples if isinstance(f, RealField) else np.asarray(f, dtype=float)


def make_reduction(kind: Union[ReductionKind, str], m, n=None,
                   grid: Optional[PeriodicGrid] = None, time: float = 0.0) -> NovikovState:
    """
    Embed a two-field reduced system as an N-component state.

    Args:
        kind: 'gx' (N=1), 'case1' (N=2, m1=n2=m, m2=n1=n) or 'case2' (N=2, m1=n1=m, m2=n2=n)
        m, n: RealFields or arrays; n defaults to m
        grid: Required when m is a plain array
        time: Initial time

    Returns:
        Tagged NovikovState
    """
    kind = ReductionKind(kind)
    if grid is None:
        if not isinstance(m, RealField):
            raise ValueError("grid is required when m is not a RealField")
        grid = m.grid
    m_arr = _as_array(m)
    n_arr = m_arr if n is None else _as_array(n)
    if kind is ReductionKind.GX:
        return NovikovState(grid, [m_arr], [n_arr], time, kind)
    if kind is ReductionKind.CASE1:
        return NovikovState(grid, [m_arr, n_arr], [n_arr, m_arr], time, kind)
    if kind is ReductionKind.CASE2:
        return NovikovState(grid, [m_arr, n_arr], [m_arr, n_arr], time, kind)
    raise ValueError(f"not a two-field reduction: {kind.value}")


def read_back(state: NovikovState) -> Tuple[RealField, RealField]:
    """Recover the reduced pair (m, n) from a tagged state."""
    if state.reduction is ReductionKind.GX:
        return state.m_field(0), state.n_field(0)
    if state.reduction in (ReductionKind.CASE1, ReductionKind.CASE2):
        return state.m_field(0), state.m_field(1)
    raise ValueError("state carries no reduction tag")


def reduction_defect(state: NovikovState) -> float:
    """Sup-norm violation of the reduction's identification constraints."""
    if state.reduction is ReductionKind.CASE1:
        return float(max(np.max(np.abs(state.m[0] - state.n[1])), np.max(np.abs(state.m[1] - state.n[0]))))
    if state.reduction is ReductionKind.CASE2:
        return float(max(np.max(np.abs(state.m[0] - state.n[0])), np.max(np.abs(state.m[1] - state.n[1]))))
    return 0.0


def reduced_rhs(kind: Union[ReductionKind, str], m: RealField, n: RealField) -> Tuple[np.ndarray, np.ndarray]:
    """Tendency of the two-field reduced system coded directly from its own equations."""
    kind = ReductionKind(kind)
    grid = m.grid
    u = helmholtz_solve(grid, m.samples)
    v = helmholtz_solve(grid, n.samples)
    ux, vx, mx, nx = spectral_derivative(grid, np.array([u, v, m.samples, n.samples]))
    mm, nn = m.samples, n.samples
    if kind is ReductionKind.GX:
        return -u * v * mx - 3 * ux * v * mm, -u * v * nx - 3 * u * vx * nn
    if kind is ReductionKind.CASE1:
        return (-2 * u * v * mx - 4 * ux * v * mm - 2 * u * vx * mm,
                -2 * u * v * nx - 4 * u * vx * nn - 2 * ux * v * nn)
    if kind is ReductionKind.CASE2:
        speed = u ** 2 + v ** 2
        drift = u * ux + v * vx
        return (-speed * mx - 3 * mm * drift - nn * (ux * v - u * vx),
                -speed * nx - 3 * nn * drift - mm * (u * vx - ux * v))
    raise ValueError(f"not a two-field reduction: {kind.value}")


# --- Time stepping ---

class StepResult(NamedTuple):
    state: NovikovState
    blowup_suspected: bool
    linf: float


def max_advection_speed(state: NovikovState) -> float:
    return float(np.max(np.abs(np.sum(state.u * state.v, axis=0))))


def stability_limit(state: NovikovState, cfl: float) -> float:
    """Advective heuristic cfl * spacing / max|a| (inf for a stationary state)."""
    speed = max_advection_speed(state)
    if speed == 0.0:
        return np.inf
    return cfl * state.grid.spacing / speed


def step_rk4(state: NovikovState, cfg: SimConfig, tracker: Optional[RunTracker] = None,
             dt: Optional[float] = None) -> StepResult:
    """Advance one classical RK4 step of size dt (default cfg.dt)."""
    grid, t = state.grid, state.time
    dt = cfg.dt if dt is None else dt
    speed = max_advection_speed(state)
    limit = stability_limit(state, cfg.cfl)
    if dt > limit:
        if tracker is not None:
            tracker.log_stability_warning(dt, limit)
        else:
            logger.warning(f"dt={dt:.3g} exceeds stability heuristic {limit:.3g}")

    rhs = RHS_FORMS[cfg.rhs_form]
    y0 = state.momentum
    k1 = rhs(grid, y0, cfg.dealias, t)
    k2 = rhs(grid, y0 + 0.5 * dt * k1, cfg.dealias, t + 0.5 * dt)
    k3 = rhs(grid, y0 + 0.5 * dt * k2, cfg.dealias, t + 0.5 * dt)
    k4 = rhs(grid, y0 + dt * k3, cfg.dealias, t + dt)
    y1 = y0 + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    finite_rows = np.all(np.isfinite(y1), axis=1)
    if not np.all(finite_rows):
        bad = int(np.argmin(finite_rows))
        raise NumericalFailureError(
            f"non-finite state after step for {component_label(bad, state.n_components)}",
            component=bad, time=t + dt,
        )
    new_state = state.with_momentum(y1, t + dt)
    linf = new_state.linf()
    if tracker is not None:
        tracker.log_step(new_state.time, speed)
    return StepResult(new_state, linf > cfg.blowup_linf_cap, linf)


# --- Stored history and characteristic flows ---

def speed_fields(state: NovikovState, kind: Union[SpeedKind, str]) -> Tuple[np.ndarray, np.ndarray]:
    """Characteristic speed and its x-derivative on the grid."""
    kind = SpeedKind(kind)
    grid = state.grid
    if kind is SpeedKind.GENERAL_A:
        u, v = state.u, state.v
        ux = spectral_derivative(grid, u)
        vx = spectral_derivative(grid, v)
        return np.sum(u * v, axis=0), np.sum(ux * v + u * vx, axis=0)
    m, n = read_back(state)
    u = helmholtz_solve(grid, m.samples)
    v = helmholtz_solve(grid, n.samples)
    ux, vx = spectral_derivative(grid, np.array([u, v]))
    if kind is SpeedKind.CASE1_2UV:
        return 2 * u * v, 2 * (ux * v + u * vx)
    return u ** 2 + v ** 2, 2 * (u * ux + v * vx)


def amplification_rates(state: NovikovState) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """
    Exponent rates transporting momentum along characteristics.

    GX:     dm/dt = -3 u_x v m,           dn/dt = -3 u v_x n
    Case 1: dm/dt = -(4 u_x v + 2 u v_x) m, dn/dt = -(4 u v_x + 2 u_x v) n
    Other states have no closed multiplicative form; returns None.
    """
    if state.reduction not in (ReductionKind.GX, ReductionKind.CASE1):
        return None
    m, n = read_back(state)
    grid = state.grid
    u = helmholtz_solve(grid, m.samples)
    v = helmholtz_solve(grid, n.samples)
    ux, vx = spectral_derivative(grid, np.array([u, v]))
    if state.reduction is ReductionKind.GX:
        return -3 * ux * v, -3 * u * vx
    return -(4 * ux * v + 2 * u * vx), -(4 * u * vx + 2 * ux * v)


class StateHistory:
    """States retained at monitor resolution, linearly interpolated in time."""

    def __init__(self):
        self._states: List[NovikovState] = []

    def __len__(self) -> int:
        return len(self._states)

    def append(self, state: NovikovState):
        if self._states:
            last = self._states[-1]
            if state.time <= last.time:
                return
            if state.grid != last.grid:
                raise ValueError("history states must share a grid")
        self._states.append(state)

    @property
    def grid(self) -> PeriodicGrid:
        return self._states[0].grid

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self._states])

    @property
    def t_start(self) -> float:
        return self._states[0].time

    @property
    def t_end(self) -> float:
        return self._states[-1].time

    @property
    def states(self) -> List[NovikovState]:
        return list(self._states)

    def state_at(self, t: float) -> NovikovState:
        if not self._states:
            raise HistoryRangeError("history is empty")
        tol = 1e-12 * max(1.0, abs(self.t_end))
        if t < self.t_start - tol or t > self.t_end + tol:
            raise HistoryRangeError(
                f"t={t:.6g} outside stored history [{self.t_start:.6g}, {self.t_end:.6g}]"
            )
        times = self.times
        k = int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 1))
        if k == len(times) - 1 or abs(t - times[k]) <= tol:
            base = self._states[k]
            return NovikovState(base.grid, base.m, base.n, t if t >= 0 else 0.0, base.reduction)
        left, right = self._states[k], self._states[k + 1]
        w = (t - left.time) / (right.time - left.time)
        stacked = (1 - w) * left.momentum + w * right.momentum
        return left.with_momentum(stacked, t)

    def speed_at(self, t: float, kind: Union[SpeedKind, str]) -> Tuple[np.ndarray, np.ndarray]:
        return speed_fields(self.state_at(t), kind)

    def rates_at(self, t: float) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        return amplification_rates(self.state_at(t))


@dataclass
class FlowMap:
    """Characteristic positions Phi(t, x_k) on the covering line and their Jacobian Phi_x."""

    seeds: np.ndarray
    positions: np.ndarray
    jacobian: np.ndarray
    time: float
    length: float
    log_amplification_m: Optional[np.ndarray] = None
    log_amplification_n: Optional[np.ndarray] = None

    def wrapped(self) -> np.ndarray:
        return np.mod(self.positions, self.length)


def flow_integrate(history, speed_kind: Union[SpeedKind, str], t: float,
                   seeds: Optional[np.ndarray] = None, dt: Optional[float] = None,
                   interpolation: str = "trig") -> FlowMap:
    """
    Integrate dPhi/dt = c(t, Phi) and d(log Phi_x)/dt = c_x(t, Phi) from the history start to t.

    Args:
        history: Object with grid, t_start, t_end, times, speed_at(t, kind) and optionally rates_at(t)
        speed_kind: Which characteristic speed to follow
        t: Final time
        seeds: Starting positions (defaults to grid nodes)
        dt: Flow step (defaults to the smallest gap between stored times)
        interpolation: 'trig' or 'cubic' off-grid sampling of the speed

    Returns:
        FlowMap at time t
    """
    grid = history.grid
    t0 = history.t_start
    tol = 1e-12 * max(1.0, abs(t))
    if t < t0 - tol or t > history.t_end + tol:
        raise HistoryRangeError(f"t={t:.6g} outside stored history [{t0:.6g}, {history.t_end:.6g}]")
    interp = trig_interpolate if interpolation == "trig" else cubic_interpolate

    x = np.array(grid.nodes if seeds is None else seeds, dtype=float)
    rates_at = getattr(history, "rates_at", None)
    track_amplification = rates_at is not None and rates_at(t0) is not None
    n_vars = 4 if track_amplification else 2
    y = np.zeros((n_vars, x.size))
    y[0] = x

    def velocity(time: float, positions: np.ndarray) -> np.ndarray:
        c, cx = history.speed_at(time, speed_kind)
        rows = [c, cx]
        if track_amplification:
            rows.extend(rates_at(time))
        return interp(grid, np.array(rows), positions)

    span = t - t0
    if span > 0:
        if dt is None:
            gaps = np.diff(history.times)
            dt = float(np.min(gaps)) if gaps.size else span
        n_steps = max(1, int(np.ceil(span / dt - 1e-9)))
        h = span / n_steps
        for k in range(n_steps):
            tk = t0 + k * h
            k1 = velocity(tk, y[0])
            k2 = velocity(tk + 0.5 * h, y[0] + 0.5 * h * k1[0])
            k3 = velocity(tk + 0.5 * h, y[0] + 0.5 * h * k2[0])
            k4 = velocity(min(tk + h, t), y[0] + h * k3[0])
            y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    return FlowMap(
        seeds=x,
        positions=y[0],
        jacobian=np.exp(y[1]),
        time=t,
        length=grid.length,
        log_amplification_m=y[2] if track_amplification else None,
        log_amplification_n=y[3] if track_amplification else None,
    )


# --- Simulation driver ---

@dataclass
class SimulationResult:
    state: NovikovState
    termination: Termination
    series: MonitorSeries
    history: Optional[StateHistory]
    steps: int
    wall_time: float = 0.0
    tracker: Optional[RunTracker] = field(default=None, repr=False)


def _observer_name(observer) -> str:
    return getattr(observer, "name", None) or getattr(observer, "__name__", None) or type(observer).__name__


def _sample(state: NovikovState, series: MonitorSeries, observers: Sequence[Observer],
            history: Optional[StateHistory], tracker: RunTracker):
    if len(series) and series.times[-1] >= state.time:
        return
    monitor_general(state, series)
    for observer in observers:
        try:
            values = observer(state)
        except Exception as exc:
            raise ObserverError(
                f"observer '{_observer_name(observer)}' failed at t={state.time:.6g}: {exc}"
            ) from exc
        if values:
            series.update_last(**values)
    if history is not None:
        history.append(state)
    tracker.log_sample(state.time, len(observers))


def run_simulation(s0: NovikovState, cfg: SimConfig, observers: Sequence[Observer] = (),
                   series: Optional[MonitorSeries] = None, record_history: bool = True,
                   tracker: Optional[RunTracker] = None, progress: bool = False,
                   run_logger: Optional[logging.Logger] = None) -> SimulationResult:
    """
    Evolve s0 to cfg.t_end with RK4 steps of cfg.dt, the last one shortened to land on t_end.

    Monitors are sampled at the start and after every cfg.monitor_stride steps.

    Passing the series of an earlier run continues it (restart concatenation).

    Returns:
        SimulationResult with termination 't_end' or 'blowup_suspected'
    """
    run_logger = run_logger or logger
    tracker = tracker or RunTracker(run_logger)
    series = series if series is not None else MonitorSeries()
    history = StateHistory() if record_history else None

    initial_linf = s0.linf()
    if cfg.blowup_linf_cap <= initial_linf:
        raise ConfigError([
            f"sim.blowup_linf_cap ({cfg.blowup_linf_cap:g}) must exceed the initial L-infinity norm ({initial_linf:g})"
        ])

    n_steps = max(0, int(np.ceil((cfg.t_end - s0.time) / cfg.dt - 1e-9)))
    run_logger.info(
        f"Running N={s0.n_components} ({s0.reduction.value}) on {s0.grid.n_points} points, "
        f"{n_steps} steps of dt={cfg.dt:g} from t={s0.time:g}"
    )
    start = wallclock.perf_counter()

    state = s0
    termination = Termination.T_END
    _sample(state, series, observers, history, tracker)
    steps_taken = 0
    for k in tqdm(range(1, n_steps + 1), desc="simulate", disable=not progress, leave=False):
        # last step shortened to land on t_end
        result = step_rk4(state, cfg, tracker, dt=min(cfg.dt, cfg.t_end - state.time))
        state = result.state
        steps_taken = k
        if result.blowup_suspected:
            termination = Termination.BLOWUP_SUSPECTED
            _sample(state, series, observers, history, tracker)
            series.flags.add("linf_cap")
            run_logger.warning(
                f"Blow-up suspected at t={state.time:.6g}: L-infinity {result.linf:.4g} "
                f"exceeds cap {cfg.blowup_linf_cap:g}"
            )
            break
        if k % cfg.monitor_stride == 0:
            _sample(state, series, observers, history, tracker)
    if history is not None and termination is Termination.T_END:
        history.append(state)  # off-stride final state; ignored when already stored

    wall_time = wallclock.perf_counter() - start
    tracker.log_summary(termination.value)
    return SimulationResult(state, termination, series, history, steps_taken, wall_time, tracker)
