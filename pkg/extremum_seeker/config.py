"""Scenario configuration: TOML parsing, overrides, validation and gain resolution."""

import logging
import math
try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib
import typing
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .controller import MODES, RD1, SCALED
from .errors import ConfigError
from .monitoring import VARIANTS
from .plants import CostMap, MapComponent, SensorDynamics

logger = logging.getLogger(__name__)

NORMAL_FORM = "normal-form"
LINEAR_SENSOR = "linear-sensor"
PLANT_KINDS = (NORMAL_FORM, LINEAR_SENSOR)
TIME_BASES = ("t", "tau")


def _freeze(value):
    if isinstance(value, list):
        return tuple(_freeze(v) for v in value)
    return value


def _coerce(where: str, ftype, value):
    """Check a raw TOML value against a dataclass field type."""
    if typing.get_origin(ftype) is typing.Union:
        if value is None:
            return None
        ftype = next(a for a in typing.get_args(ftype) if a is not type(None))
    if ftype is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"'{where}' must be a number, got {value!r}")
        return float(value)
    if ftype is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"'{where}' must be an integer, got {value!r}")
        return value
    if ftype is bool and not isinstance(value, bool):
        raise ConfigError(f"'{where}' must be true or false, got {value!r}")
    if ftype is str and not isinstance(value, str):
        raise ConfigError(f"'{where}' must be a string, got {value!r}")
    if typing.get_origin(ftype) is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"'{where}' must be a list, got {value!r}")
        return _freeze(list(value))
    return value


def _section_from_dict(cls, section: str, settings: dict):
    if not isinstance(settings, dict):
        raise ConfigError(f"[{section}] must be a table")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(settings) - known)
    if unknown:
        raise ConfigError(f"Unknown key '{section}.{unknown[0]}'")
    values = {key: _coerce(f"{section}.{key}", hints[key], raw) for key, raw in settings.items()}
    return cls(**values)


@dataclass
class PlantConfig:
    """Plant matrices. normal-form: x = [eta; z], z last. linear-sensor: mu x' = A x + B v, z = C x."""
    kind: str = NORMAL_FORM
    a: Tuple = ((-1.0, 1.0), (1.0, 1.0))
    b: Tuple = (0.0, 1.0)
    c: Tuple = ()
    mu: float = 1.0
    phi2_lower: float = 1.0

    @classmethod
    def from_dict(cls, settings: dict) -> "PlantConfig":
        return _section_from_dict(cls, "plant", settings)


@dataclass
class MapConfig:
    kind: str = "gaussian-mixture"
    amplitudes: Tuple = ()
    centers: Tuple = ()
    widths: Tuple = ()
    peak: float = 0.0
    center: float = 0.0
    curvature: float = 1.0
    points: Tuple = ()
    values: Tuple = ()
    grid_min: float = -10.0
    grid_max: float = 15.0
    grid_points: int = 5001

    @classmethod
    def from_dict(cls, settings: dict) -> "MapConfig":
        return _section_from_dict(cls, "map", settings)

    def build(self) -> CostMap:
        if not len(self.amplitudes) == len(self.centers) == len(self.widths):
            raise ConfigError("map.amplitudes, map.centers and map.widths must have equal length")
        return CostMap(
            kind=self.kind,
            components=tuple(
                MapComponent(float(a), float(c), float(w))
                for a, c, w in zip(self.amplitudes, self.centers, self.widths)
            ),
            peak=self.peak,
            center=self.center,
            curvature=self.curvature,
            table_points=tuple(float(p) for p in self.points),
            table_values=tuple(float(v) for v in self.values),
            grid_min=self.grid_min,
            grid_max=self.grid_max,
            grid_points=self.grid_points,
        )


@dataclass
class SourceConfig:
    """Light source placed over the [map] shape; only read when enabled."""
    enabled: bool = False
    ambient: float = 0.0
    sensor_cap: float = 5.0
    times: Tuple = (0.0,)
    positions: Tuple = (0.0,)
    off_until: float = 0.0

    @classmethod
    def from_dict(cls, settings: dict) -> "SourceConfig":
        return _section_from_dict(cls, "source", settings)


@dataclass
class ControllerConfig:
    """Gains. In scaled mode km and lam are the unscaled bases; mu multiplies them.

    r, L_phi and kp_lower may be given directly or derived from mu; a derivation
    gain, when present, wins over the direct value: r = r_gain * sqrt(mu),
    L_phi = L_phi_gain * r, kp_lower = kp_ratio * L_phi (kp_ratio falls back
    to plant.phi2_lower for normal-form plants; a given kp_lower is kept).
    """
    mode: str = RD1
    lam: float = 1.0
    km: float = 1.0
    ym0: float = 0.0
    ysat: Optional[float] = None
    delta: float = 0.1
    r: Optional[float] = 0.1
    r_gain: Optional[float] = None
    L_phi: Optional[float] = None
    L_phi_gain: Optional[float] = None
    kp_lower: Optional[float] = None
    kp_ratio: Optional[float] = None
    mu: float = 1.0
    initial_direction: int = 1
    pi_enabled: bool = True
    pi_cap: float = 10.0
    pi_dwell: float = 1.0  # seconds without a switch before Pi may restart
    alpha1_gain: float = 1.0
    phi1_gain: float = 1.0
    phi1_offset: float = 0.0
    phibar_max: Optional[float] = None  # None: sup |Phi'| of the map
    phibar_slope: float = 0.0
    rho_override: Optional[float] = None  # diagnostics only: pins rho

    @classmethod
    def from_dict(cls, settings: dict) -> "ControllerConfig":
        return _section_from_dict(cls, "controller", settings)


@dataclass
class ObserverConfig:
    lambda0: float = 1.0
    gain: float = 1.0
    offset: float = 0.0

    @classmethod
    def from_dict(cls, settings: dict) -> "ObserverConfig":
        return _section_from_dict(cls, "observer", settings)


@dataclass
class MonitoringConfig:
    variant: str = "new"
    enabled: bool = True  # false freezes the relay direction
    a_offset: float = 1.0
    a_slope: float = 1.0
    c_scale: float = 2.0

    @classmethod
    def from_dict(cls, settings: dict) -> "MonitoringConfig":
        return _section_from_dict(cls, "monitoring", settings)


@dataclass
class GridConfig:
    """Step and horizon are measured in the chosen time base (t or tau = t / mu)."""
    step: float = 1e-3
    horizon: float = 15.0
    time_base: str = "t"
    divergence_bound: float = 1e6

    @classmethod
    def from_dict(cls, settings: dict) -> "GridConfig":
        return _section_from_dict(cls, "grid", settings)


@dataclass
class InitConfig:
    z0: float = 0.0
    eta0: Optional[Tuple] = None  # zeros when omitted
    x0: Optional[Tuple] = None
    v0: float = 0.0
    eta_bar0: float = 0.0

    @classmethod
    def from_dict(cls, settings: dict) -> "InitConfig":
        return _section_from_dict(cls, "init", settings)


@dataclass
class NoiseConfig:
    amplitude: float = 0.0  # uniform in [-amplitude, amplitude]
    seed: int = 0

    @classmethod
    def from_dict(cls, settings: dict) -> "NoiseConfig":
        return _section_from_dict(cls, "noise", settings)


@dataclass
class DiagnosticsConfig:
    z_star: Optional[float] = None  # computed from the map when omitted
    tail_fraction: float = 0.2
    calibration: str = ""

    @classmethod
    def from_dict(cls, settings: dict) -> "DiagnosticsConfig":
        return _section_from_dict(cls, "diagnostics", settings)


SECTIONS = {
    "plant": PlantConfig,
    "map": MapConfig,
    "source": SourceConfig,
    "controller": ControllerConfig,
    "observer": ObserverConfig,
    "monitoring": MonitoringConfig,
    "grid": GridConfig,
    "init": InitConfig,
    "noise": NoiseConfig,
    "diagnostics": DiagnosticsConfig,
}


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    plant: PlantConfig = field(default_factory=PlantConfig)
    map: MapConfig = field(default_factory=MapConfig)
    source: SourceConfig = field(default_factory=SourceConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    observer: ObserverConfig = field(default_factory=ObserverConfig)
    monitoring: MonitoringConfig = field(default_factory=MonitoringConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    init: InitConfig = field(default_factory=InitConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)

    def to_dict(self) -> Dict[str, Any]:
        """Nested plain dictionary; None-valued keys are dropped."""
        data: Dict[str, Any] = {"name": self.name}
        for section in SECTIONS:
            data[section] = {
                k: v for k, v in asdict(getattr(self, section)).items() if v is not None
            }
        return data


def parse_config_data(config_data: dict) -> ScenarioConfig:
    """Build a ScenarioConfig from raw parsed TOML data."""
    sections = {}
    name = "scenario"
    for key, settings in config_data.items():
        if key == "name":
            name = str(settings)
            continue
        if key not in SECTIONS:
            raise ConfigError(f"Unknown section '[{key}]'")
        sections[key] = SECTIONS[key].from_dict(settings)
    return ScenarioConfig(name=name, **sections)


def load_config_file(config_file: Path) -> dict:
    """Load and parse a TOML scenario file."""
    config_file = Path(config_file)
    if not config_file.exists():
        raise FileNotFoundError(
            f"Scenario file not found: {config_file}\n"
            f"See example_config/ for ready-made scenarios"
        )
    with open(config_file, "rb") as f:
        return tomllib.load(f)


def load_scenario(config_file: Path) -> ScenarioConfig:
    return parse_config_data(load_config_file(config_file))


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        escaped = value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    return str(value)


def dump_toml(config: ScenarioConfig) -> str:
    data = config.to_dict()
    lines = [f"name = {_toml_value(data.pop('name'))}"]
    for section, settings in data.items():
        lines.append("")
        lines.append(f"[{section}]")
        lines.extend(f"{key} = {_toml_value(value)}" for key, value in settings.items())
    return "\n".join(lines) + "\n"


def write_config_file(config: ScenarioConfig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_toml(config))
    return path


def parse_value(raw: str):
    """Interpret the right-hand side of an override as a TOML value, else as a bare string."""
    try:
        return tomllib.loads(f"value = {raw}")["value"]
    except tomllib.TOMLDecodeError:
        return raw.strip()


def apply_overrides(config: ScenarioConfig, overrides: List[str]) -> ScenarioConfig:
    """Apply dotted ``section.key=value`` overrides, returning a new config."""
    data = config.to_dict()
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"Override '{item}' is not of the form section.key=value")
        dotted, raw = item.split("=", 1)
        section, _, key = dotted.strip().partition(".")
        if section not in SECTIONS or key not in {f.name for f in fields(SECTIONS[section])}:
            raise ConfigError(f"Unknown key '{dotted.strip()}'")
        data[section][key] = parse_value(raw)
        logger.debug("Override %s = %r", dotted.strip(), data[section][key])
    return parse_config_data(data)


# -- gains ---------------------------------------------------------------------

@dataclass(frozen=True)
class EffectiveGains:
    """Gains as the closed loop uses them; ``km`` and ``lam`` are mu-scaled in scaled mode."""
    km: float
    lam: float
    km_base: float
    lam_base: float
    mu: float
    delta: float
    r: Optional[float]
    L_phi: Optional[float]
    kp_lower: Optional[float]


def resolve_gains(config: ScenarioConfig) -> EffectiveGains:
    ctl = config.controller
    mu = ctl.mu if ctl.mode == SCALED else 1.0
    r = ctl.r if ctl.r_gain is None else ctl.r_gain * math.sqrt(max(mu, 0.0))
    L_phi = ctl.L_phi
    if ctl.L_phi_gain is not None and r is not None:
        L_phi = ctl.L_phi_gain * r
    kp = ctl.kp_lower
    if kp is None and L_phi is not None:
        ratio = ctl.kp_ratio
        if ratio is None and config.plant.kind == NORMAL_FORM:
            ratio = config.plant.phi2_lower
        if ratio is not None:
            kp = ratio * L_phi
    return EffectiveGains(
        km=mu * ctl.km,
        lam=mu * ctl.lam,
        km_base=ctl.km,
        lam_base=ctl.lam,
        mu=mu,
        delta=ctl.delta,
        r=r,
        L_phi=L_phi,
        kp_lower=kp,
    )


# -- validation ----------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    field: str
    rule: str

    def __str__(self) -> str:
        return f"{self.field}: {self.rule}"


def _check_plant(config: ScenarioConfig, out: List[Violation]) -> None:
    plant = config.plant
    if plant.kind not in PLANT_KINDS:
        out.append(Violation("plant.kind", f"must be one of {PLANT_KINDS}"))
        return
    try:
        a = np.atleast_2d(np.asarray(plant.a, dtype=float))
        b = np.asarray(plant.b, dtype=float).reshape(-1)
    except (TypeError, ValueError):
        out.append(Violation("plant.a", "matrices must be numeric"))
        return
    n = a.shape[0]
    if a.shape != (n, n):
        out.append(Violation("plant.a", "must be a square matrix"))
        return
    if b.shape != (n,):
        out.append(Violation("plant.b", f"must have {n} entries"))
        return
    if plant.kind == NORMAL_FORM:
        if not plant.phi2_lower > 0:
            out.append(Violation("plant.phi2_lower", "phi2_lower must be positive"))
        if np.any(b[:-1] != 0.0):
            out.append(Violation("plant.b", "input must enter only the z equation"))
        elif abs(b[-1]) < plant.phi2_lower:
            out.append(Violation("plant.b", "|b_z| is below phi2_lower"))
        eta0 = config.init.eta0
        if eta0 is not None and len(eta0) != n - 1:
            out.append(Violation("init.eta0", f"must have {n - 1} entries"))
    else:
        try:
            SensorDynamics(a=a, b=b, c=np.asarray(plant.c, dtype=float), mu=plant.mu)
        except (ConfigError, ValueError) as err:
            out.append(Violation("plant.a", str(err)))
        x0 = config.init.x0
        if x0 is not None and len(x0) != n:
            out.append(Violation("init.x0", f"must have {n} entries"))


def _check_controller(config: ScenarioConfig, gains: EffectiveGains, out: List[Violation]) -> None:
    ctl = config.controller
    if ctl.mode not in MODES:
        out.append(Violation("controller.mode", f"must be one of {MODES}"))
    elif ctl.mode == RD1 and config.plant.kind != NORMAL_FORM:
        out.append(Violation("controller.mode", "rd1 mode requires a normal-form plant"))
    elif ctl.mode == SCALED and config.plant.kind != LINEAR_SENSOR:
        out.append(Violation("controller.mode", "scaled mode requires a linear-sensor plant"))
    if gains.r is None or not gains.r > 0:
        out.append(Violation("controller.r", "r must be positive"))
    if gains.L_phi is None or not gains.L_phi > 0:
        out.append(Violation("controller.L_phi", "L_phi must be positive"))
    if gains.kp_lower is None or not gains.kp_lower > 0:
        out.append(Violation("controller.kp_lower", "kp_lower must be positive"))
    for name in ("lam", "km", "delta", "pi_cap"):
        if not getattr(ctl, name) > 0:
            out.append(Violation(f"controller.{name}", f"{name} must be positive"))
    if not 0 < ctl.mu <= 1:
        out.append(Violation("controller.mu", "mu must lie in (0, 1]"))
    if ctl.pi_dwell < 0:
        out.append(Violation("controller.pi_dwell", "pi_dwell must be nonnegative"))
    if ctl.initial_direction not in (1, -1):
        out.append(Violation("controller.initial_direction", "must be +1 or -1"))
    if ctl.ysat is not None and ctl.ysat < ctl.ym0:
        out.append(Violation("controller.ysat", "ysat must not be below ym0"))
    for name in ("alpha1_gain", "phi1_gain", "phi1_offset", "phibar_slope"):
        if getattr(ctl, name) < 0:
            out.append(Violation(f"controller.{name}", f"{name} must be nonnegative"))
    if ctl.phibar_max is not None and ctl.phibar_max < 0:
        out.append(Violation("controller.phibar_max", "phibar_max must be nonnegative"))
    if ctl.rho_override is not None and ctl.rho_override < 0:
        out.append(Violation("controller.rho_override", "rho_override must be nonnegative"))


def validate(config: ScenarioConfig) -> List[Violation]:
    """Return every broken rule; an empty list means the scenario can run."""
    out: List[Violation] = []
    gains = resolve_gains(config)
    _check_plant(config, out)
    _check_controller(config, gains, out)

    try:
        config.map.build()
    except ConfigError as err:
        out.append(Violation("map", str(err)))

    src = config.source
    if src.enabled:
        if config.plant.kind != LINEAR_SENSOR:
            out.append(Violation("source.enabled", "a light source needs a linear-sensor plant"))
        if src.ambient < 0:
            out.append(Violation("source.ambient", "ambient must be nonnegative"))
        if not src.sensor_cap > 0:
            out.append(Violation("source.sensor_cap", "sensor_cap must be positive"))
        if len(src.times) == 0 or len(src.times) != len(src.positions):
            out.append(Violation("source.times", "times and positions must match"))
        elif np.any(np.diff(src.times) <= 0):
            out.append(Violation("source.times", "times must be strictly increasing"))

    obs = config.observer
    if not obs.lambda0 > 0:
        out.append(Violation("observer.lambda0", "lambda0 must be positive"))
    if obs.gain < 0 or obs.offset < 0:
        out.append(Violation("observer.gain", "observer gain and offset must be nonnegative"))
    if config.init.eta_bar0 < 0:
        out.append(Violation("init.eta_bar0", "eta_bar0 must be nonnegative"))

    mon = config.monitoring
    if mon.variant not in VARIANTS:
        out.append(Violation("monitoring.variant", f"must be one of {VARIANTS}"))
    if not mon.a_slope > 0 or not mon.a_offset > 0:
        out.append(Violation("monitoring.a_slope", "a(k) must be positive and strictly increasing"))
    if not mon.c_scale > 0:
        out.append(Violation("monitoring.c_scale", "c(k) must be positive and strictly decreasing"))

    grid = config.grid
    if not grid.step > 0:
        out.append(Violation("grid.step", "step must be positive"))
    elif grid.horizon < grid.step:
        out.append(Violation("grid.horizon", "horizon must be at least one step"))
    if grid.time_base not in TIME_BASES:
        out.append(Violation("grid.time_base", f"must be one of {TIME_BASES}"))
    elif grid.time_base == "tau" and config.controller.mode != SCALED:
        out.append(Violation("grid.time_base", "the tau time base is only defined in scaled mode"))
    if not grid.divergence_bound > 0:
        out.append(Violation("grid.divergence_bound", "divergence_bound must be positive"))
    if grid.step > 0 and obs.lambda0 > 0:
        physical_step = grid.step * (gains.mu if grid.time_base == "tau" else 1.0)
        if physical_step >= 1.0 / obs.lambda0:
            out.append(Violation("grid.step", "step must be below 1/observer.lambda0"))

    if config.noise.amplitude < 0:
        out.append(Violation("noise.amplitude", "amplitude must be nonnegative"))
    if not 0 < config.diagnostics.tail_fraction <= 1:
        out.append(Violation("diagnostics.tail_fraction", "tail_fraction must lie in (0, 1]"))
    return out
