"""Closed-loop simulation: plant, observer, reference model and controller in lockstep.

Each sample follows the same order: read outputs, update the monitoring
function (and flip the relay if it was violated), compute rho and u, then
Euler-advance plant, observer and reference model.
"""

import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .config import LINEAR_SENSOR, ScenarioConfig, resolve_gains, validate
from .controller import (
    RD1,
    ControllerState,
    DominationBounds,
    ReferenceModel,
    control_output,
    flip_direction,
    modulation_rd1,
    modulation_scaled,
    reference_step,
    reset_pi,
)
from .errors import SimulationDiverged, SimulationFault, ValidationError
from .euler import TimeGrid, euler_step
from .monitoring import MonitorState, SwitchSequences, detect_switch, envelope
from .observer import ObserverState, observer_step
from .plants import (
    LinearSensorPlant,
    MapDiagnostics,
    NormalFormDynamics,
    NormalFormPlant,
    SensorDynamics,
    SourceField,
    SourceSchedule,
    diagnose_map,
    eval_map,
    source_output,
    step_linear_sensor,
    step_linear_sensor_tau,
    step_normal_form,
)

__all__ = ["SimTrace", "ClosedLoop", "run_simulation", "euler_step", "TimeGrid"]

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("t", "z", "y", "y_m", "e", "phi_m", "u", "v", "rho", "k", "sigma", "eta_bar", "src")
OPTIONAL_COLUMNS = ("v", "src")
INT_COLUMNS = ("k", "sigma")
DIAGNOSTIC_COLUMNS = ("eta_norm", "y_true", "z_star")


@dataclass(frozen=True)
class SimTrace:
    """Per-sample record of a run. Arrays are read-only once the trace exists."""
    t: np.ndarray
    z: np.ndarray
    y: np.ndarray
    y_m: np.ndarray
    e: np.ndarray
    phi_m: np.ndarray
    u: np.ndarray
    v: Optional[np.ndarray]
    rho: np.ndarray
    k: np.ndarray
    sigma: np.ndarray
    eta_bar: np.ndarray
    src: Optional[np.ndarray] = None
    # diagnostics kept out of the CSV
    eta_norm: Optional[np.ndarray] = None
    y_true: Optional[np.ndarray] = None
    z_star: Optional[np.ndarray] = None
    observer_rate: Optional[float] = None
    warnings: Tuple[str, ...] = ()
    # (t, time of the last switch) for every Pi restart
    pi_resets: Tuple[Tuple[float, float], ...] = ()

    def __post_init__(self):
        for name in CSV_COLUMNS + DIAGNOSTIC_COLUMNS:
            column = getattr(self, name)
            if column is not None:
                column.flags.writeable = False

    def __len__(self) -> int:
        return len(self.t)

    @classmethod
    def from_columns(cls, columns: Dict[str, np.ndarray], **extras) -> "SimTrace":
        data = {name: columns.get(name) for name in CSV_COLUMNS + DIAGNOSTIC_COLUMNS}
        for name in CSV_COLUMNS:
            if data[name] is None and name not in OPTIONAL_COLUMNS:
                raise ValueError(f"Trace column '{name}' is missing")
        for name, column in data.items():
            if column is not None:
                dtype = int if name in INT_COLUMNS else float
                data[name] = np.array(column, dtype=dtype)
        return cls(**data, **extras)

    def tail(self, fraction: float) -> slice:
        """Index range covering the final ``fraction`` of the samples."""
        return slice(int(len(self) * (1.0 - fraction)), len(self))

    def between(self, t0: float, t1: float) -> np.ndarray:
        return (self.t >= t0) & (self.t <= t1)

    def is_finite(self) -> bool:
        return all(
            np.all(np.isfinite(getattr(self, name)))
            for name in CSV_COLUMNS
            if getattr(self, name) is not None
        )


class _Recorder:
    def __init__(self, samples: int, with_v: bool, with_src: bool):
        names = list(CSV_COLUMNS + DIAGNOSTIC_COLUMNS)
        if not with_v:
            names.remove("v")
        if not with_src:
            names.remove("src")
        self.columns = {
            name: np.zeros(samples, dtype=int if name in INT_COLUMNS else float) for name in names
        }
        self.count = 0

    def record(self, i: int, **values) -> None:
        for name, value in values.items():
            column = self.columns.get(name)
            if column is not None:
                column[i] = value
        self.count = i + 1

    def build(self, **extras) -> SimTrace:
        return SimTrace.from_columns(
            {name: col[: self.count] for name, col in self.columns.items()}, **extras
        )


def build_source_field(config: ScenarioConfig) -> Optional[SourceField]:
    src = config.source
    if not src.enabled:
        return None
    return SourceField(
        shape=config.map.build(),
        schedule=SourceSchedule(
            times=tuple(float(t) for t in src.times),
            positions=tuple(float(p) for p in src.positions),
            off_until=src.off_until,
        ),
        ambient=src.ambient,
        sensor_cap=src.sensor_cap,
    )


def build_plant(config: ScenarioConfig) -> Union[NormalFormPlant, LinearSensorPlant]:
    plant, init = config.plant, config.init
    if plant.kind == LINEAR_SENSOR:
        dynamics = SensorDynamics(a=plant.a, b=plant.b, c=plant.c, mu=plant.mu)
        n = dynamics.a.shape[0]
        x0 = np.zeros(n) if init.x0 is None else np.asarray(init.x0, dtype=float)
        return LinearSensorPlant(dynamics=dynamics, x=x0, v=init.v0)
    dynamics = NormalFormDynamics.from_matrices(plant.a, plant.b, plant.phi2_lower)
    n = len(plant.b)
    eta0 = np.zeros(n - 1) if init.eta0 is None else np.asarray(init.eta0, dtype=float)
    return NormalFormPlant(dynamics=dynamics, eta=eta0, z=init.z0)


class ClosedLoop:
    """Assembles every component of a scenario and runs it."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.gains = resolve_gains(config)
        self.cost_map = config.map.build()
        self.field = build_source_field(config)
        self.diagnostics: MapDiagnostics = diagnose_map(self.cost_map, self.gains.L_phi)
        ctl = config.controller
        self.sequences = SwitchSequences(
            a_offset=config.monitoring.a_offset,
            a_slope=config.monitoring.a_slope,
            c_scale=config.monitoring.c_scale,
        )
        phibar_max = ctl.phibar_max if ctl.phibar_max is not None else self.diagnostics.derivative_sup
        self.bounds = DominationBounds(
            alpha1_gain=ctl.alpha1_gain,
            phi1_gain=ctl.phi1_gain,
            phi1_offset=ctl.phi1_offset,
            phibar_max=phibar_max,
            phibar_slope=ctl.phibar_slope,
        )
        self.tau_base = config.grid.time_base == "tau"
        self.grid = TimeGrid(config.grid.step, config.grid.horizon)
        # physical seconds per sample
        self.h = config.grid.step * (self.gains.mu if self.tau_base else 1.0)
        self.warnings = self.gain_warnings()
        logger.info(
            "Scenario %s: km=%.6g (base %.6g) lam=%.6g (base %.6g) mu=%.6g r=%.6g kp=%.6g",
            config.name, self.gains.km, self.gains.km_base, self.gains.lam,
            self.gains.lam_base, self.gains.mu, self.gains.r, self.gains.kp_lower,
        )

    def gain_warnings(self) -> List[str]:
        """Gain checks that do not stop a run.

        For a linear-sensor plant the relay only dominates when
        kp_lower <= L_phi * |C A^-1 B|, the smallest HFG outside the vicinity.
        """
        warnings = []
        plant = self.config.plant
        if plant.kind == LINEAR_SENSOR and None not in (self.gains.kp_lower, self.gains.L_phi):
            dynamics = SensorDynamics(a=plant.a, b=plant.b, c=plant.c, mu=plant.mu)
            hfg_floor = abs(dynamics.high_frequency_gain(self.gains.L_phi))
            if self.gains.kp_lower > hfg_floor:
                message = (
                    f"kp_lower={self.gains.kp_lower:.6g} exceeds L_phi*|C A^-1 B|={hfg_floor:.6g}"
                )
                logger.warning("Scenario %s: %s", self.config.name, message)
                warnings.append(message)
        return warnings

    def optimum(self, t: float) -> float:
        if self.field is not None:
            return self.field.optimum(t)
        z_star = self.config.diagnostics.z_star
        return self.diagnostics.z_star if z_star is None else z_star

    def peak_output(self) -> float:
        if self.field is not None:
            return self.field.peak_output()
        return self.diagnostics.y_star

    def measure(self, z: float, t: float) -> float:
        if self.field is not None:
            return source_output(self.field, z, t)
        return eval_map(self.cost_map, z)

    def run(self) -> SimTrace:
        config, gains = self.config, self.gains
        ctl = config.controller
        n = self.grid.samples
        h = self.h
        times = self.grid.times(self.gains.mu if self.tau_base else 1.0)
        bound = config.grid.divergence_bound
        rng = np.random.default_rng(config.noise.seed)
        noise = config.noise.amplitude

        plant = build_plant(config)
        obs = ObserverState(
            eta_bar=config.init.eta_bar0,
            lambda0=config.observer.lambda0,
            gain=config.observer.gain,
            offset=config.observer.offset,
        )
        ref = ReferenceModel(y_m=ctl.ym0, km=gains.km, y_sat=ctl.ysat)
        cs = ControllerState(
            mode=ctl.mode,
            sigma=ctl.initial_direction,
            delta=gains.delta,
            kp_lower=gains.kp_lower,
            lam=gains.lam,
            km=gains.km,
            mu=gains.mu,
            pi_enabled=ctl.pi_enabled and ctl.mode == RD1,
            pi_cap=ctl.pi_cap,
            pi_dwell=ctl.pi_dwell,
            pi_sequence=self.sequences,
        )
        ms: Optional[MonitorState] = None
        recorder = _Recorder(n, with_v=isinstance(plant, LinearSensorPlant), with_src=self.field is not None)
        warnings = list(self.warnings)
        breaches = 0
        pi_resets = []

        for i in range(n):
            t = float(times[i])
            z = plant.output()
            y_true = self.measure(z, t)
            y = y_true + noise * rng.uniform(-1.0, 1.0) if noise > 0 else y_true
            e = y - ref.y_m
            if not (np.isfinite(z) and np.isfinite(e)):
                raise SimulationFault("Non-finite output", i)

            if ms is None:
                ms = MonitorState(
                    variant=config.monitoring.variant,
                    t_k=t,
                    e_k=abs(e),
                    lam=gains.lam,
                    r=gains.r,
                    sequences=self.sequences,
                )
            elif config.monitoring.enabled:
                ms, switched = detect_switch(ms, e, t)
                if switched:
                    cs = flip_direction(cs)
            phi_m = envelope(ms, t)

            if ctl.rho_override is not None:
                rho = ctl.rho_override
            elif cs.mode == RD1:
                restarted = reset_pi(cs, t, ms.t_k)
                if restarted.k_pi < cs.k_pi:
                    pi_resets.append((t, ms.t_k))
                cs = restarted
                rho = modulation_rd1(cs, e, obs.eta_bar, z, t, self.bounds)
            else:
                rho = modulation_scaled(cs, e)
            cs = replace(cs, rho=rho)
            u = control_output(cs, e)

            if isinstance(plant, NormalFormPlant) and plant.phi2_breached(t):
                breaches += 1
                if breaches == 1:
                    logger.warning("|phi2| fell below phi2_lower at t=%.4f", t)

            recorder.record(
                i, t=t, z=z, y=y, y_m=ref.y_m, e=e, phi_m=phi_m, u=u,
                v=getattr(plant, "v", 0.0), rho=rho, k=ms.k, sigma=cs.sigma,
                eta_bar=obs.eta_bar,
                src=self.field.schedule.position(t) if self.field is not None else 0.0,
                eta_norm=plant.eta_norm(), y_true=y_true, z_star=self.optimum(t),
            )
            if abs(z) > bound or abs(e) > bound:
                logger.warning("Trajectory diverged at t=%.4f (|z|=%.3g, |e|=%.3g)", t, abs(z), abs(e))
                raise SimulationDiverged(
                    "trajectory diverged", i, self._finish(recorder, warnings, breaches, pi_resets)
                )
            if i == n - 1:
                break

            if isinstance(plant, NormalFormPlant):
                plant = step_normal_form(plant, u, t, h, i)
            elif self.tau_base:
                plant = step_linear_sensor_tau(plant, u, config.grid.step, gains.mu, i)
            else:
                plant = step_linear_sensor(plant, u, h, i)
            obs = observer_step(obs, z, t, h)
            ref = reference_step(ref, h)

        return self._finish(recorder, warnings, breaches, pi_resets)

    def _finish(self, recorder: _Recorder, warnings, breaches: int, pi_resets) -> SimTrace:
        if breaches:
            warnings = warnings + [f"|phi2| below phi2_lower on {breaches} samples"]
        return recorder.build(
            observer_rate=self.config.observer.lambda0,
            warnings=tuple(warnings),
            pi_resets=tuple(pi_resets),
        )


def run_simulation(scenario: ScenarioConfig) -> SimTrace:
    """Validate and run a scenario.

    Raises ValidationError for a broken scenario and SimulationDiverged (with
    the partial trace attached) when the divergence guard trips.
    """
    violations = validate(scenario)
    if violations:
        raise ValidationError(violations)
    return ClosedLoop(scenario).run()
