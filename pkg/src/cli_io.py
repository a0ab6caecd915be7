"""Scenario orchestration: initial data, observers, runs and bit-stable artifacts."""

import logging
import os
import sys
import time as wallclock
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Set

import numpy as np
import pandas as pd

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.blowup import MonitorSeries, case1_observer, case2_observer, detect_divergence
from src.dynamics import (
    NovikovState,
    ReductionKind,
    SpeedKind,
    flow_integrate,
    make_reduction,
    make_state,
    run_simulation,
)
from src.grid_spectral import PeriodicGrid
from src.invariants import SignObserver, bounds_observer, invariants_observer
from src.peakon import (
    PeakonCandidate,
    PeakonSpec,
    TestFunctionSet,
    mollified_peakon_momentum,
    peakon_speed,
    weak_residual,
)
from src.utils.config_loader import ScenarioConfig, serialize_config
from src.utils.errors import ArtifactIOError, ConfigError, InsufficientDataError, NovikovError, NumericalFailureError
from src.utils.logger import RunTracker, attach_run_log, detach_run_log, get_logger
from src.utils.metadata_manager import RunManifest

CSV_FLOAT_FORMAT = "%.17g"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


# --- Initial data ---

def _bump_field(grid: PeriodicGrid, family: str, amplitude: float, center: float, width: float,
                mode: int = 1) -> np.ndarray:
    x = grid.nodes
    d = np.mod(x - center + 0.5 * grid.length, grid.length) - 0.5 * grid.length
    if family == "gaussian":
        return amplitude * np.exp(-(d / width) ** 2)
    if family == "sech":
        return amplitude / np.cosh(d / width)
    if family == "sine":
        return amplitude * np.cos(2.0 * np.pi * mode * (x - center) / grid.length)
    raise ConfigError([f"initial.family: unknown bump family {family}"])


def _bump_fields(cfg: ScenarioConfig, grid: PeriodicGrid, prefix: str) -> List[np.ndarray]:
    init = cfg.initial
    amplitudes = getattr(init, f"{prefix}_amplitudes")
    centers = getattr(init, f"{prefix}_centers")
    widths = getattr(init, f"{prefix}_widths")
    modes = init.modes if init.family == "sine" else [1] * len(amplitudes)
    return [
        _bump_field(grid, init.family, a, c, w, k) + init.offset
        for a, c, w, k in zip(amplitudes, centers, widths, modes)
    ]


def _read_sample_file(cfg: ScenarioConfig, grid: PeriodicGrid, base_dir: Optional[Path]) -> pd.DataFrame:
    path = Path(cfg.initial.file)
    if not path.is_absolute() and base_dir is not None:
        path = base_dir / path
    try:
        frame = pd.read_csv(path)
    except OSError as e:
        raise ArtifactIOError(f"cannot read initial data file {path}: {e}") from e
    if len(frame) != grid.n_points:
        raise ConfigError([f"initial.file: {len(frame)} rows but grid.n_points = {grid.n_points}"])
    return frame


def peakon_spec_from_config(cfg: ScenarioConfig) -> PeakonSpec:
    flavor = "periodic_unit" if cfg.scenario.kind == "periodic_peakon" else "line_truncated"
    x0 = cfg.initial.x0 if cfg.initial.x0 is not None else 0.5 * cfg.grid.length
    return PeakonSpec(tuple(cfg.initial.p), tuple(cfg.initial.q), x0, flavor)


def build_initial_state(cfg: ScenarioConfig, base_dir: Optional[Path] = None) -> NovikovState:
    """
    Turn the initial-data descriptor into a NovikovState.

    Reduced kinds (gx, case1, case2) build one m and one n field (bumps are
    summed) and embed them; the general kind uses one bump per component.
    """
    grid = PeriodicGrid(cfg.grid.n_points, cfg.grid.length)
    kind = cfg.scenario.kind
    family = cfg.initial.family
    N = cfg.n_components

    if kind in ("peakon", "periodic_peakon"):
        spec = peakon_spec_from_config(cfg)
        return mollified_peakon_momentum(spec, grid, 0.0, cfg.initial.sigma_cells * grid.spacing)

    if family == "zero":
        m_rows = [np.zeros(grid.n_points)] * (1 if kind != "general" else N)
        n_rows = list(m_rows)
    elif family == "file":
        frame = _read_sample_file(cfg, grid, base_dir)
        if kind == "general":
            names_m = [f"m_{i + 1}" for i in range(N)]
            names_n = [f"n_{i + 1}" for i in range(N)]
        else:
            names_m, names_n = ["m"], ["n"]
        missing = [c for c in names_m + names_n if c not in frame.columns]
        if missing:
            raise ConfigError([f"initial.file: missing columns {missing}"])
        m_rows = [frame[c].to_numpy(dtype=float) for c in names_m]
        n_rows = [frame[c].to_numpy(dtype=float) for c in names_n]
    else:
        m_rows = _bump_fields(cfg, grid, "m")
        n_rows = _bump_fields(cfg, grid, "n")

    if kind == "general":
        return make_state(grid, m_rows, n_rows)
    return make_reduction(kind, np.sum(m_rows, axis=0), np.sum(n_rows, axis=0), grid=grid)


def build_observers(cfg: ScenarioConfig, state: NovikovState) -> list:
    """Observers named in observers.attach; case monitors only for matching reductions."""
    observers = []
    for name in cfg.observers.attach:
        if name == "invariants":
            observers.append(invariants_observer)
        elif name == "signs":
            observers.append(SignObserver())
        elif name == "bounds":
            observers.append(bounds_observer)
        elif name == "case_monitors":
            if state.reduction in (ReductionKind.GX, ReductionKind.CASE1):
                observers.append(case1_observer)
            elif state.reduction is ReductionKind.CASE2:
                observers.append(case2_observer)
    return observers


def default_speed_kind(state: NovikovState) -> SpeedKind:
    if state.reduction is ReductionKind.CASE1:
        return SpeedKind.CASE1_2UV
    if state.reduction is ReductionKind.CASE2:
        return SpeedKind.CASE2_U2V2
    return SpeedKind.GENERAL_A


# --- Artifacts ---

def _write_csv(frame: pd.DataFrame, path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            frame.to_csv(f, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
            f.flush()
    except OSError as e:
        raise ArtifactIOError(f"cannot write {path}: {e}") from e


def snapshot_frame(state: NovikovState) -> pd.DataFrame:
    """x, m_1..m_N, n_1..n_N, u_1..u_N, v_1..v_N columns."""
    N = state.n_components
    columns: Dict[str, np.ndarray] = {"x": state.grid.nodes}
    for prefix, rows in (("m", state.m), ("n", state.n), ("u", state.u), ("v", state.v)):
        for i in range(N):
            columns[f"{prefix}_{i + 1}"] = rows[i]
    return pd.DataFrame(columns)


def write_snapshot(state: NovikovState, run_dir: Path, label: Optional[str] = None) -> Path:
    name = label or f"t{state.time:.6f}"
    path = run_dir / "snapshots" / f"snapshot_{name}.csv"
    _write_csv(snapshot_frame(state), path)
    return path


def write_monitors(series: MonitorSeries, path: Path) -> Path:
    """monitors.csv with the fixed columns first; absent values are written empty."""
    _write_csv(series.to_frame(), path)
    return path


class SnapshotObserver:
    """Writes the first sampled state at or after each requested time."""

    name = "snapshots"

    def __init__(self, times: List[float], run_dir: Path):
        self.pending = sorted(times)
        self.run_dir = run_dir
        self.written: List[Path] = []

    def __call__(self, state: NovikovState):
        while self.pending and state.time >= self.pending[0] - 1e-12:
            requested = self.pending.pop(0)
            self.written.append(write_snapshot(state, self.run_dir, f"t{requested:.6f}"))
        return None


# --- Orchestration ---

@dataclass
class ScenarioOutcome:
    exit_code: int
    run_dir: Path
    termination: str
    flags: Set[str] = field(default_factory=set)
    series: Optional[MonitorSeries] = None
    final_state: Optional[NovikovState] = None


def _run_dir(cfg: ScenarioConfig, out_dir: Optional[Path]) -> Path:
    run_dir = Path(out_dir) if out_dir is not None else cfg.output_root() / cfg.scenario.name
    try:
        run_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ArtifactIOError(f"cannot create run directory {run_dir}: {e}") from e
    return run_dir


def run_scenario(cfg: ScenarioConfig, out_dir: Optional[Path] = None, base_dir: Optional[Path] = None,
                 logger: Optional[logging.Logger] = None) -> ScenarioOutcome:
    """
    Run one scenario and write monitors.csv, snapshots and manifest.json.

    Exit codes: 0 completed (including blow-up suspected), 2 config error,
    3 numerical failure, 4 I/O failure.

    Args:
        cfg: Validated scenario
        out_dir: Run directory (default <output root>/<scenario name>)
        base_dir: Directory relative initial-data files resolve against
        logger: Optional logger instance

    Returns:
        ScenarioOutcome
    """
    logger = logger or get_logger("simulate")
    try:
        run_dir = _run_dir(cfg, out_dir)
    except ArtifactIOError as e:
        logger.error(str(e))
        return ScenarioOutcome(EXIT_IO, Path(out_dir or "."), "io_failure")

    try:
        run_log = attach_run_log(logger, run_dir)
    except OSError as e:
        logger.warning(f"Run log disabled: {e}")
        run_log = None
    try:
        return _run_in_dir(cfg, run_dir, base_dir, logger)
    finally:
        detach_run_log(logger, run_log)


def _run_in_dir(cfg: ScenarioConfig, run_dir: Path, base_dir: Optional[Path],
                logger: logging.Logger) -> ScenarioOutcome:
    manifest = RunManifest(str(run_dir / "manifest.json"), logger=logger)
    manifest.record_config(cfg.model_dump())
    manifest.manifest["config_text"] = serialize_config(cfg)
    tracker = RunTracker(logger)
    start = wallclock.perf_counter()
    flags: Set[str] = set()

    try:
        state0 = build_initial_state(cfg, base_dir)
        observers = build_observers(cfg, state0)
        snapshots = SnapshotObserver(cfg.output.snapshot_times, run_dir)
        if cfg.output.snapshot_times:
            observers.append(snapshots)

        result = run_simulation(
            state0, cfg.sim, observers,
            record_history=cfg.flow.enabled,
            tracker=tracker,
            progress=cfg.output.progress,
            run_logger=logger,
        )
        series = result.series
        flags |= series.flags
        try:
            flags |= detect_divergence(series, cfg.detection, cfg.sim.blowup_linf_cap)
        except InsufficientDataError as e:
            logger.info(f"Skipping divergence detection: {e}")
        for observer in observers:
            if isinstance(observer, SignObserver) and observer.violations:
                flags.add("sign_violation")

        manifest.add_artifact(write_monitors(series, run_dir / "monitors.csv"))
        manifest.add_artifact(write_snapshot(result.state, run_dir, "final"))
        for path in snapshots.written:
            manifest.add_artifact(path)

        if cfg.flow.enabled and result.history is not None and len(result.history) > 0:
            kind = cfg.flow.speed_kind or default_speed_kind(state0).value
            flow = flow_integrate(result.history, kind, result.history.t_end,
                                  interpolation=cfg.flow.interpolation)
            columns = {"x": flow.seeds, "phi": flow.positions, "jacobian": flow.jacobian}
            if flow.log_amplification_m is not None:
                columns["log_amplification_m"] = flow.log_amplification_m
                columns["log_amplification_n"] = flow.log_amplification_n
            flow_path = run_dir / "flow.csv"
            _write_csv(pd.DataFrame(columns), flow_path)
            manifest.add_artifact(flow_path)
            if np.any(flow.jacobian <= 0):
                flags.add("nonpositive_jacobian")

        termination = result.termination.value
        exit_code = EXIT_OK
        manifest.record_outcome(termination, exit_code, wallclock.perf_counter() - start, result.steps,
                                len(series), result.state.time, flags)
        manifest.save()
        return ScenarioOutcome(exit_code, run_dir, termination, flags, series, result.state)

    except ConfigError as e:
        termination, exit_code = "config_error", EXIT_CONFIG
        logger.error(f"Configuration error: {e}")
        error = e
    except NumericalFailureError as e:
        termination, exit_code = "numerical_failure", EXIT_NUMERICAL
        logger.error(f"Numerical failure: {e}")
        error = e
    except ArtifactIOError as e:
        termination, exit_code = "io_failure", EXIT_IO
        logger.error(f"I/O failure: {e}")
        error = e
    except NovikovError as e:
        termination, exit_code = "numerical_failure", EXIT_NUMERICAL
        logger.error(f"Run aborted: {e}")
        error = e

    manifest.record_error(error)
    manifest.record_outcome(termination, exit_code, wallclock.perf_counter() - start, tracker.steps,
                            tracker.samples, None, flags)
    try:
        manifest.save()
    except ArtifactIOError as e:
        logger.error(str(e))
        exit_code = EXIT_IO
    return ScenarioOutcome(exit_code, run_dir, termination, flags)


def peakon_check(cfg: ScenarioConfig, out_dir: Optional[Path] = None,
                 logger: Optional[logging.Logger] = None) -> Dict:
    """
    Weak-form residual of the exact peakon at its predicted speed and at a perturbed speed.

    Returns:
        Report dictionary (also written as peakon_check.json with weak_residual.csv)
    """
    logger = logger or get_logger("peakon-check")
    if cfg.scenario.kind not in ("peakon", "periodic_peakon"):
        raise ConfigError([f"scenario.kind: peakon-check needs peakon or periodic_peakon, got {cfg.scenario.kind}"])
    spec = peakon_spec_from_config(cfg)
    weak = cfg.weak_form
    rng = np.random.default_rng(cfg.scenario.seed)
    length = None if spec.flavor == "periodic_unit" else cfg.grid.length
    tests = TestFunctionSet.random(rng, weak.tests, spec, weak.horizon, length, weak.time_slices)

    c = peakon_speed(spec)
    logger.info(f"Checking weak form for N={spec.n_components}, c={c:.10g} over {len(tests)} tests")
    exact = weak_residual(PeakonCandidate(spec, length=length), tests)
    perturbed = weak_residual(PeakonCandidate(spec, speed=weak.perturbation * c, length=length), tests)
    ratio = perturbed.max_abs / max(exact.max_abs, np.finfo(float).tiny)

    report = {
        "speed": c,
        "n_tests": len(tests),
        "max_residual": exact.max_abs,
        "perturbed_speed": weak.perturbation * c,
        "perturbed_max_residual": perturbed.max_abs,
        "ratio": ratio,
        "tolerance": weak.tolerance,
        "passed": bool(exact.max_abs <= weak.tolerance and ratio >= 10.0),
    }
    run_dir = _run_dir(cfg, out_dir)
    frame = exact.to_frame()
    frame["perturbed_residual"] = perturbed.to_frame()["residual"]
    _write_csv(frame, run_dir / "weak_residual.csv")
    manifest = RunManifest(str(run_dir / "peakon_check.json"), logger=logger)
    manifest.record_config(cfg.model_dump())
    manifest.manifest["report"] = report
    manifest.save()
    return report


def emit_plots(run_dir: Path, logger: Optional[logging.Logger] = None) -> List[Path]:
    """
    Write one two-column (time, value) CSV per recorded monitor under <run_dir>/plots.

    Returns:
        Paths written
    """
    logger = logger or get_logger("emit-plots")
    run_dir = Path(run_dir)
    monitors = run_dir / "monitors.csv"
    try:
        frame = pd.read_csv(monitors)
    except (OSError, pd.errors.EmptyDataError) as e:
        raise ArtifactIOError(f"cannot read {monitors}: {e}") from e

    written = []
    for column in frame.columns:
        if column == "time":
            continue
        pair = frame[["time", column]].dropna()
        if pair.empty:
            continue
        path = run_dir / "plots" / f"{column}.csv"
        _write_csv(pair.rename(columns={column: "value"}), path)
        written.append(path)
    logger.info(f"Wrote {len(written)} monitor series to {run_dir / 'plots'}")
    return written
