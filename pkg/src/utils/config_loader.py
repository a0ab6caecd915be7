"""Scenario configuration for novikov-lab.

Scenario files use flat ``section.key = value`` lines with ``#`` comments;
values are decoded with ``yaml.safe_load`` so strings, numbers, booleans and
bracketed arrays follow one grammar. Nested YAML documents are accepted too.
"""

import os
import re
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.utils.errors import ConfigError

SCENARIO_KINDS = ("general", "gx", "case1", "case2", "peakon", "periodic_peakon")
OBSERVER_NAMES = ("invariants", "signs", "bounds", "case_monitors")
REDUCED_KINDS = ("gx", "case1", "case2")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class ScenarioSection(_Section):
    """What is being simulated."""
    kind: Literal["general", "gx", "case1", "case2", "peakon", "periodic_peakon"] = Field(
        default="gx", description="Scenario kind")
    name: str = Field(default="scenario", description="Run name used for the output directory")
    n_components: int = Field(default=1, ge=1, description="Number of components N (general and peakon kinds)")
    seed: int = Field(default=0, description="Seed for randomized test families")


class GridConfig(_Section):
    """Periodic grid."""
    n_points: int = Field(default=256, ge=8, description="Number of grid points")
    length: float = Field(default=40.0, gt=0, description="Domain length L")


class SimConfig(_Section):
    """Time stepping."""
    dt: float = Field(default=1e-3, gt=0, description="RK4 step size")
    t_end: float = Field(default=1.0, gt=0, description="Final time")
    dealias: bool = Field(default=True, description="2/3-rule truncation of nonlinear products")
    monitor_stride: int = Field(default=10, ge=1, description="Steps between monitor samples")
    blowup_linf_cap: float = Field(default=1e6, gt=0, description="Abort threshold on max momentum sup norm")
    cfl: float = Field(default=0.5, gt=0, description="Advective stability constant (warning only)")
    rhs_form: Literal["componentwise", "transport"] = Field(
        default="componentwise", description="Right-hand side evaluation used by the stepper")

    @model_validator(mode="after")
    def _dt_below_t_end(self):
        if self.dt >= self.t_end:
            raise ValueError(f"dt ({self.dt}) must be smaller than t_end ({self.t_end})")
        return self


class InitialConfig(_Section):
    """Initial data descriptor."""
    family: Literal["zero", "gaussian", "sech", "sine", "peakon", "file"] = Field(
        default="gaussian", description="Initial data family")
    m_amplitudes: List[float] = Field(default_factory=lambda: [1.0], description="Bump amplitudes for m")
    m_centers: List[float] = Field(default_factory=lambda: [18.0], description="Bump centers for m")
    m_widths: List[float] = Field(default_factory=lambda: [1.0], description="Bump widths for m")
    n_amplitudes: List[float] = Field(default_factory=lambda: [1.0], description="Bump amplitudes for n")
    n_centers: List[float] = Field(default_factory=lambda: [22.0], description="Bump centers for n")
    n_widths: List[float] = Field(default_factory=lambda: [1.0], description="Bump widths for n")
    modes: List[int] = Field(default_factory=lambda: [1], description="Fourier mode per bump (sine family)")
    offset: float = Field(default=0.0, description="Constant added to every momentum field")
    p: List[float] = Field(default_factory=lambda: [1.0], description="Peakon amplitudes p_i")
    q: List[float] = Field(default_factory=lambda: [1.0], description="Peakon amplitudes q_i")
    x0: Optional[float] = Field(default=None, description="Initial peak position (default L/2)")
    sigma_cells: float = Field(default=4.0, gt=0, description="Mollifier width in grid cells")
    file: Optional[str] = Field(default=None, description="CSV of samples with x, m_i and n_i columns")


class ObserversConfig(_Section):
    """Observers attached to the run."""
    attach: List[str] = Field(default_factory=lambda: list(OBSERVER_NAMES), description="Observer names")


class OutputConfig(_Section):
    """Artifacts."""
    root: str = Field(default="results", description="Output root (NOVIKOV_OUT overrides)")
    snapshot_times: List[float] = Field(default_factory=list, description="Times at which field snapshots are written")
    progress: bool = Field(default=False, description="Show a progress bar")


class DetectionPolicy(_Section):
    """Divergence heuristics for the blow-up monitors."""
    magnitude: Optional[float] = Field(default=None, gt=0, description="Absolute magnitude threshold")
    magnitude_factor: float = Field(default=1e3, gt=0, description="Threshold as a multiple of the initial scale")
    rate: float = Field(default=1e2, gt=0, description="Slope threshold per unit time")
    window: int = Field(default=20, ge=2, description="Samples in the slope window")
    linf_cap: Optional[float] = Field(default=None, gt=0, description="Cap for flag (a); defaults to sim.blowup_linf_cap")


class FlowConfig(_Section):
    """Characteristic flow written after the run."""
    enabled: bool = Field(default=False, description="Integrate the characteristic flow at t_end")
    speed_kind: Optional[Literal["general_a", "case1_2uv", "case2_u2v2"]] = Field(
        default=None, description="Speed to follow (default from scenario kind)")
    interpolation: Literal["trig", "cubic"] = Field(default="trig", description="Off-grid speed sampling")


class WeakFormConfig(_Section):
    """Weak-form residual check used by peakon-check."""
    tests: int = Field(default=20, ge=1, description="Number of randomized test functions")
    horizon: float = Field(default=1.0, gt=0, description="Time horizon T")
    time_slices: int = Field(default=200, ge=2, description="Minimum Simpson slices; raised for fast peaks, made even")
    perturbation: float = Field(default=1.1, gt=0, description="Speed factor of the control candidate")
    tolerance: float = Field(default=1e-6, gt=0, description="Normalized residual tolerance")


class ScenarioConfig(_Section):
    """Complete scenario."""
    scenario: ScenarioSection = Field(default_factory=ScenarioSection)
    grid: GridConfig = Field(default_factory=GridConfig)
    sim: SimConfig = Field(default_factory=SimConfig)
    initial: InitialConfig = Field(default_factory=InitialConfig)
    observers: ObserversConfig = Field(default_factory=ObserversConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)
    detection: DetectionPolicy = Field(default_factory=DetectionPolicy)
    flow: FlowConfig = Field(default_factory=FlowConfig)
    weak_form: WeakFormConfig = Field(default_factory=WeakFormConfig)

    @property
    def n_components(self) -> int:
        if self.scenario.kind == "gx":
            return 1
        if self.scenario.kind in ("case1", "case2"):
            return 2
        return self.scenario.n_components

    def output_root(self) -> Path:
        return Path(os.getenv("NOVIKOV_OUT") or self.output.root)


_LINE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\.([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*)$")


def _parse_flat(text: str) -> Dict[str, Dict[str, Any]]:
    data: Dict[str, Dict[str, Any]] = {}
    errors: List[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        match = _LINE.match(line)
        if not match:
            errors.append(f"line {lineno}: expected 'section.key = value', got {raw.strip()!r}")
            continue
        section, key, value = match.groups()
        try:
            decoded = yaml.safe_load(value) if value.strip() else None
        except yaml.YAMLError as e:
            errors.append(f"line {lineno}: cannot parse value for {section}.{key}: {e}")
            continue
        data.setdefault(section, {})[key] = decoded
    if errors:
        raise ConfigError(errors)
    return data


def _describe(error: Dict[str, Any]) -> str:
    location = ".".join(str(part) for part in error["loc"])
    if error["type"] == "extra_forbidden":
        return f"unknown key: {location}"
    message = error["msg"]
    if message.startswith("Value error, "):
        message = message[len("Value error, "):]
    return f"{location}: {message}" if location else message


def _cross_checks(cfg: ScenarioConfig, base_dir: Optional[Path]) -> List[str]:
    violations = []
    kind = cfg.scenario.kind
    init = cfg.initial
    n = cfg.n_components

    if kind == "periodic_peakon" and cfg.grid.length != 1.0:
        violations.append(f"grid.length: length must be 1 for periodic_peakon (got {cfg.grid.length:g})")
    if kind in ("peakon", "periodic_peakon"):
        if init.family != "peakon":
            violations.append(f"initial.family: must be 'peakon' for scenario kind {kind}")
        if len(init.p) != n or len(init.q) != n:
            violations.append(f"initial.p/initial.q: need {n} entries each for n_components={n}")
        if init.sigma_cells < 2.0:
            violations.append(f"initial.sigma_cells: under-resolved mollifier ({init.sigma_cells:g} < 2 cells)")
    elif init.family == "peakon":
        violations.append("initial.family: 'peakon' requires scenario kind peakon or periodic_peakon")

    if kind in REDUCED_KINDS and cfg.scenario.n_components not in (1, n):
        violations.append(f"scenario.n_components: {kind} fixes N={n}")

    if init.family in ("gaussian", "sech", "sine"):
        for prefix in ("m", "n"):
            sizes = {len(getattr(init, f"{prefix}_{part}")) for part in ("amplitudes", "centers", "widths")}
            if len(sizes) != 1:
                violations.append(f"initial.{prefix}_*: amplitudes, centers and widths must have equal length")
            elif kind == "general" and sizes != {n}:
                violations.append(f"initial.{prefix}_*: general kind needs one bump per component ({n})")
        if init.family == "sine" and len(init.modes) != len(init.m_amplitudes):
            violations.append("initial.modes: one mode per bump required for the sine family")
        if any(w <= 0 for w in init.m_widths + init.n_widths):
            violations.append("initial.*_widths: widths must be positive")

    if init.family == "file":
        if not init.file:
            violations.append("initial.file: required for family 'file'")
        else:
            path = Path(init.file)
            if not path.is_absolute() and base_dir is not None:
                path = base_dir / path
            if not path.exists():
                violations.append(f"initial.file: file not found: {init.file}")

    unknown = [name for name in cfg.observers.attach if name not in OBSERVER_NAMES]
    if unknown:
        violations.append(f"observers.attach: unknown observers {unknown}; choose from {list(OBSERVER_NAMES)}")
    if any(t < 0 or t > cfg.sim.t_end for t in cfg.output.snapshot_times):
        violations.append("output.snapshot_times: times must lie in [0, sim.t_end]")
    if cfg.flow.speed_kind == "case1_2uv" and kind not in ("case1",):
        violations.append("flow.speed_kind: case1_2uv needs a case1 scenario")
    if cfg.flow.speed_kind == "case2_u2v2" and kind not in ("case2",):
        violations.append("flow.speed_kind: case2_u2v2 needs a case2 scenario")
    return violations


def config_from_dict(data: Dict[str, Any], base_dir: Optional[Path] = None) -> ScenarioConfig:
    """
    Validate a nested mapping into a ScenarioConfig.

    Raises:
        ConfigError: With every schema and cross-field violation found
    """
    try:
        cfg = ScenarioConfig(**(data or {}))
    except ValidationError as e:
        raise ConfigError([_describe(err) for err in e.errors()]) from e
    violations = _cross_checks(cfg, base_dir)
    if violations:
        raise ConfigError(violations)
    return cfg


def parse_config(text: str, base_dir: Optional[Path] = None) -> ScenarioConfig:
    """
    Parse the flat ``section.key = value`` grammar.

    Args:
        text: Configuration document
        base_dir: Directory relative file references resolve against

    Returns:
        Validated ScenarioConfig
    """
    return config_from_dict(_parse_flat(text), base_dir)


def _format_value(value: Any) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return '"' + value.replace('\\', '\\\\').replace('"', '\\"') + '"'
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_format_value(v) for v in value) + "]"
    return str(value)


def serialize_config(cfg: ScenarioConfig) -> str:
    """Emit every key of the config in the flat grammar, section by section."""
    lines = []
    for section, values in cfg.model_dump().items():
        lines.append(f"# {section}")
        for key, value in values.items():
            lines.append(f"{section}.{key} = {_format_value(value)}")
    return "\n".join(lines) + "\n"


def load_config(config_path: str) -> ScenarioConfig:
    """
    Load a scenario file (flat grammar, or nested YAML for .yaml/.yml).

    Args:
        config_path: Path to the scenario file

    Returns:
        ScenarioConfig object with loaded configuration.
    """
    config_file = Path(config_path)
    if not config_file.exists():
        raise ConfigError([f"config file not found: {config_path}"])

    with open(config_file, 'r') as f:
        text = f.read()

    if config_file.suffix in (".yaml", ".yml"):
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise ConfigError([f"invalid YAML in {config_path}: {e}"]) from e
        return config_from_dict(data, config_file.parent)
    return parse_config(text, config_file.parent)
