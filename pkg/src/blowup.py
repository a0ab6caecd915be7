"""Blow-up monitors: the L-infinity accumulator, slope-product minima and divergence detection."""

import logging
from typing import TYPE_CHECKING, Dict, List, Optional, Set, Tuple

import numpy as np
import pandas as pd

from src.grid_spectral import RealField, derivative, helmholtz_solve, require_same_grid
from src.utils.config_loader import DetectionPolicy
from src.utils.errors import InsufficientDataError

if TYPE_CHECKING:
    from src.dynamics import NovikovState

logger = logging.getLogger(__name__)

MONITOR_COLUMNS = [
    "time", "linf_max", "general_accum", "H", "H1", "H2",
    "case1_min_uxv", "case1_min_uvx", "case2_min_drift", "case2_max_wronskian",
]

MINIMUM_MONITORS = ("case1_min_uxv", "case1_min_uvx", "case2_min_drift")
MAXIMUM_MONITORS = ("case2_max_wronskian",)


class MonitorSeries:
    """Timestamped monitor records; one row per sample, columns filled by monitors and observers."""

    def __init__(self):
        self._records: List[Dict[str, float]] = []
        self._extra_columns: List[str] = []
        self.flags: Set[str] = set()

    def __len__(self) -> int:
        return len(self._records)

    def append(self, time: float, **values: float):
        if self._records and time <= self._records[-1]["time"]:
            raise ValueError(
                f"monitor times must be strictly increasing: {time} after {self._records[-1]['time']}"
            )
        self._records.append({"time": float(time)})
        self.update_last(**values)

    def update_last(self, **values: float):
        if not self._records:
            raise ValueError("no sample to update")
        for name, value in values.items():
            if name not in MONITOR_COLUMNS and name not in self._extra_columns:
                self._extra_columns.append(name)
            self._records[-1][name] = float(value)

    @property
    def columns(self) -> List[str]:
        return MONITOR_COLUMNS + self._extra_columns

    def column(self, name: str) -> np.ndarray:
        """Values of one column, NaN where a sample did not record it."""
        return np.array([r.get(name, np.nan) for r in self._records], dtype=float)

    def has(self, name: str) -> bool:
        return any(name in r for r in self._records)

    def last(self, name: str) -> float:
        return self._records[-1].get(name, np.nan) if self._records else np.nan

    @property
    def times(self) -> np.ndarray:
        return self.column("time")

    @property
    def linf_max(self) -> np.ndarray:
        return self.column("linf_max")

    @property
    def general_accum(self) -> np.ndarray:
        return self.column("general_accum")

    def to_frame(self) -> pd.DataFrame:
        """All samples as a DataFrame with the fixed monitor columns first."""
        return pd.DataFrame(self._records, columns=self.columns)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "MonitorSeries":
        series = cls()
        for row in frame.to_dict(orient="records"):
            values = {k: v for k, v in row.items() if k != "time" and pd.notna(v)}
            series.append(row["time"], **values)
        return series


def monitor_general(state: "NovikovState", series: MonitorSeries) -> MonitorSeries:
    """
    Append max_i(||m_i||_inf, ||n_i||_inf) and the running integral of its square.

    The integral is accumulated by the trapezoidal rule over monitor samples.
    """
    linf = state.linf()
    accum = 0.0
    if len(series):
        t_prev = series.last("time")
        linf_prev = series.last("linf_max")
        accum = series.last("general_accum") + 0.5 * (state.time - t_prev) * (linf_prev ** 2 + linf ** 2)
    series.append(state.time, linf_max=linf, general_accum=accum)
    return series


def monitor_case1(u: RealField, v: RealField) -> Tuple[float, float]:
    """Grid minima of u_x v and u v_x."""
    require_same_grid(u, v)
    ux = derivative(u).samples
    vx = derivative(v).samples
    return float(np.min(ux * v.samples)), float(np.min(u.samples * vx))


def monitor_case2(u: RealField, v: RealField) -> Tuple[float, float]:
    """min(u u_x + v v_x) and max|u_x v - u v_x|."""
    require_same_grid(u, v)
    ux = derivative(u).samples
    vx = derivative(v).samples
    drift = u.samples * ux + v.samples * vx
    wronskian = ux * v.samples - u.samples * vx
    return float(np.min(drift)), float(np.max(np.abs(wronskian)))


def _reduced_velocities(state: "NovikovState") -> Tuple[RealField, RealField]:
    from src.dynamics import read_back

    m, n = read_back(state)
    grid = state.grid
    u = helmholtz_solve(grid, m.samples)
    v = helmholtz_solve(grid, n.samples)
    return RealField(grid, u), RealField(grid, v)


def case1_observer(state: "NovikovState") -> Dict[str, float]:
    """Case-1/GX slope monitors on the reduced pair read back from the state."""
    min_uxv, min_uvx = monitor_case1(*_reduced_velocities(state))
    return {"case1_min_uxv": min_uxv, "case1_min_uvx": min_uvx}


def case2_observer(state: "NovikovState") -> Dict[str, float]:
    min_drift, max_wronskian = monitor_case2(*_reduced_velocities(state))
    return {"case2_min_drift": min_drift, "case2_max_wronskian": max_wronskian}


def _window_slope(times: np.ndarray, values: np.ndarray) -> float:
    mask = np.isfinite(values)
    if mask.sum() < 2:
        return 0.0
    return float(np.polyfit(times[mask], values[mask], 1)[0])


def _reference_scale(series: MonitorSeries, values: np.ndarray) -> float:
    # slope products scale like |M|^2
    scale = abs(values[np.isfinite(values)][0])
    linf = series.linf_max
    if np.any(np.isfinite(linf)):
        scale = max(scale, float(linf[np.isfinite(linf)][0]) ** 2)
    return max(scale, np.finfo(float).tiny)


def detect_divergence(series: MonitorSeries, policy: Optional[DetectionPolicy] = None,
                      linf_cap: Optional[float] = None) -> Set[str]:
    """
    Finite-horizon surrogate for the liminf/limsup blow-up criteria.

    Flags:
        linf_cap: linf_max exceeded the cap
        <monitor>_divergence: a monitored minimum fell below -magnitude while
            its slope over the last `window` samples is steeper than -rate
            (mirrored for monitored maxima)

    Args:
        series: Monitor samples
        policy: Detection thresholds (defaults used when None)
        linf_cap: Cap used when the policy does not set one

    Returns:
        The raised flags; they are also added to series.flags
    """
    policy = policy or DetectionPolicy()
    if len(series) < policy.window:
        raise InsufficientDataError(
            f"insufficient data: {len(series)} samples, detection window is {policy.window}"
        )

    flags: Set[str] = set()
    times = series.times
    cap = policy.linf_cap if policy.linf_cap is not None else linf_cap
    linf = series.linf_max
    if cap is not None and np.any(linf[np.isfinite(linf)] > cap):
        flags.add("linf_cap")

    recent_times = times[-policy.window:]
    for name in MINIMUM_MONITORS + MAXIMUM_MONITORS:
        values = series.column(name)
        if not np.any(np.isfinite(values)):
            continue
        magnitude = policy.magnitude
        if magnitude is None:
            magnitude = policy.magnitude_factor * _reference_scale(series, values)
        slope = _window_slope(recent_times, values[-policy.window:])
        if name in MINIMUM_MONITORS:
            diverging = np.nanmin(values) < -magnitude and slope < -policy.rate
        else:
            diverging = np.nanmax(values) > magnitude and slope > policy.rate
        if diverging:
            flags.add(f"{name}_divergence")

    if flags:
        logger.info(f"Divergence flags raised: {sorted(flags)}")
    series.flags.update(flags)
    return flags


def offline_accumulator(times: np.ndarray, linf: np.ndarray) -> np.ndarray:
    """Trapezoidal running integral of linf^2 recomputed from dumped columns."""
    increments = 0.5 * np.diff(times) * (linf[:-1] ** 2 + linf[1:] ** 2)
    return np.concatenate([[0.0], np.cumsum(increments)])
