"""Conserved quantities, sign preservation and one-sided velocity bounds, exposed as observers."""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from src.blowup import MonitorSeries
from src.dynamics import FlowMap, NovikovState, ReductionKind, component_label, read_back
from src.grid_spectral import (
    RealField,
    derivative,
    helmholtz_invert,
    integrate,
    require_same_grid,
    sobolev_norm,
    trig_interpolate,
)
from src.utils.errors import InsufficientDataError

logger = logging.getLogger(__name__)

SIGN_TOLERANCE = 1e-8


class HTriple(NamedTuple):
    h_mv: float
    h_nu: float
    h_energy: float


@dataclass
class InvariantRecord:
    time: float
    H: float = np.nan
    H1: float = np.nan
    H2: float = np.nan
    h1_norm_u: float = np.nan
    h1_norm_v: float = np.nan
    sign_violation_m: float = 0.0
    sign_violation_n: float = 0.0

    def as_dict(self) -> Dict[str, float]:
        return {k: v for k, v in self.__dict__.items() if k != "time" and np.isfinite(v)}


def conserved_H(m: RealField, n: RealField) -> HTriple:
    """
    The cross energy computed three independent ways.

    Returns:
        (integral of m v, integral of n u, integral of u v + u_x v_x)
    """
    require_same_grid(m, n)
    u = helmholtz_invert(m)
    v = helmholtz_invert(n)
    ux = derivative(u)
    vx = derivative(v)
    return HTriple(
        h_mv=integrate(m * v),
        h_nu=integrate(n * u),
        h_energy=integrate(u * v + ux * vx),
    )


def conserved_H1_H2(u: RealField, v: RealField) -> Tuple[float, float]:
    """H1 = integral of u^2 + u_x^2 and H2 likewise for v, evaluated spectrally."""
    require_same_grid(u, v)
    return sobolev_norm(u, 1.0) ** 2, sobolev_norm(v, 1.0) ** 2


class SignReport(NamedTuple):
    m_min: np.ndarray
    n_min: np.ndarray

    @property
    def violation_m(self) -> float:
        return float(min(0.0, np.min(self.m_min)))

    @property
    def violation_n(self) -> float:
        return float(min(0.0, np.min(self.n_min)))


def sign_report(state: NovikovState) -> SignReport:
    """Grid minimum of every m_i and n_i."""
    return SignReport(np.min(state.m, axis=1), np.min(state.n, axis=1))


def one_sided_bounds(u: RealField) -> Tuple[float, float]:
    """Pointwise minima of u + u_x and u - u_x."""
    ux = derivative(u).samples
    return float(np.min(u.samples + ux)), float(np.min(u.samples - ux))


class GrowthFit(NamedTuple):
    rate: float
    log_intercept: float
    reference_rate: float


def h1_growth_check(series: MonitorSeries, m0_l2: float, n0_l2: float,
                    column: str = "h1_norm_u") -> GrowthFit:
    """
    Least-squares fit of log ||u||_H1 against time.

    reference_rate is 2 ||m0||_L2 ||n0||_L2, the exponent of the growth bound
    with its unspecified constant set to one; it is reported, not enforced.
    """
    times = series.times
    values = series.column(column)
    mask = np.isfinite(values) & (values > 0)
    if mask.sum() < 2:
        raise InsufficientDataError(f"insufficient data: need two positive samples of {column}")
    rate, intercept = np.polyfit(times[mask], np.log(values[mask]), 1)
    return GrowthFit(float(rate), float(intercept), 2.0 * m0_l2 * n0_l2)


def reduced_velocities(state: NovikovState) -> Tuple[RealField, RealField]:
    """(u, v) of the reduced pair for tagged states, else of the first component."""
    if state.reduction is ReductionKind.GENERAL:
        return state.u_field(0), state.v_field(0)
    m, n = read_back(state)
    return helmholtz_invert(m), helmholtz_invert(n)


def invariant_record(state: NovikovState) -> InvariantRecord:
    """Everything the invariants observer reports for one snapshot."""
    record = InvariantRecord(time=state.time)
    u, v = reduced_velocities(state)
    record.h1_norm_u = sobolev_norm(u, 1.0)
    record.h1_norm_v = sobolev_norm(v, 1.0)
    if state.reduction is ReductionKind.GX:
        record.H = conserved_H(state.m_field(0), state.n_field(0)).h_mv
    if state.reduction is ReductionKind.CASE1:
        record.H1, record.H2 = conserved_H1_H2(u, v)
    signs = sign_report(state)
    record.sign_violation_m = signs.violation_m
    record.sign_violation_n = signs.violation_n
    return record


def invariants_observer(state: NovikovState) -> Dict[str, float]:
    """
    Observer for conserved quantities.

    GX states also report the two other expressions of H so the triple
    agreement can be checked from the series. General states report the
    componentwise candidates integral of m_i v_i, which are not known to be conserved.
    """
    values = invariant_record(state).as_dict()
    if state.reduction is ReductionKind.GX:
        triple = conserved_H(state.m_field(0), state.n_field(0))
        values["H_nu"] = triple.h_nu
        values["H_energy"] = triple.h_energy
    elif state.reduction is ReductionKind.GENERAL:
        for i in range(state.n_components):
            values[f"H_candidate_{i + 1}"] = integrate(state.m_field(i) * state.v_field(i))
    return values


@dataclass
class SignObserver:
    """Tracks components that start nonnegative and flags dips below -tol * running scale."""

    tolerance: float = SIGN_TOLERANCE
    name: str = "signs"
    nonnegative: Optional[np.ndarray] = None
    scale: float = 0.0
    violations: List[Tuple[float, str, float]] = field(default_factory=list)

    def __call__(self, state: NovikovState) -> Dict[str, float]:
        report = sign_report(state)
        mins = np.concatenate([report.m_min, report.n_min])
        if self.nonnegative is None:
            self.nonnegative = mins >= 0
        self.scale = max(self.scale, state.linf())
        threshold = -self.tolerance * self.scale
        for index in np.flatnonzero(self.nonnegative & (mins < threshold)):
            label = component_label(int(index), state.n_components)
            self.violations.append((state.time, label, float(mins[index])))
            logger.warning(f"Sign violation in {label} at t={state.time:.6g}: min {mins[index]:.3e}")
        return {"sign_violation_m": report.violation_m, "sign_violation_n": report.violation_n}


def bounds_observer(state: NovikovState) -> Dict[str, float]:
    """Minima of (1 +/- d/dx) applied to the reduced velocities."""
    u, v = reduced_velocities(state)
    plus_u, minus_u = one_sided_bounds(u)
    plus_v, minus_v = one_sided_bounds(v)
    return {
        "bound_plus_u": plus_u, "bound_minus_u": minus_u,
        "bound_plus_v": plus_v, "bound_minus_v": minus_v,
    }


def transport_consistency(flow: FlowMap, state: NovikovState, m0: RealField, n0: RealField) -> Tuple[float, float]:
    """
    Compare momentum carried along characteristics with the evolved fields.

    Predicted m(t, Phi) = m0 * exp(log_amplification_m), likewise n; evolved
    values are sampled at Phi by trigonometric interpolation.

    Returns:
        Max relative mismatch for m and for n
    """
    if flow.log_amplification_m is None:
        raise ValueError("flow carries no amplification exponents (needs a GX or case1 history)")
    grid = require_same_grid(m0, n0)
    m_t, n_t = read_back(state)
    mismatches = []
    for initial, evolved, log_amp in ((m0, m_t, flow.log_amplification_m), (n0, n_t, flow.log_amplification_n)):
        predicted = trig_interpolate(grid, initial.samples, flow.seeds) * np.exp(log_amp)
        actual = trig_interpolate(grid, evolved.samples, flow.positions)
        scale = max(float(np.max(np.abs(actual))), np.finfo(float).tiny)
        mismatches.append(float(np.max(np.abs(predicted - actual)) / scale))
    return mismatches[0], mismatches[1]
