"""Preset scenarios, run metrics and trace/metadata artifacts."""

import csv
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .config import (
    LINEAR_SENSOR,
    NORMAL_FORM,
    ControllerConfig,
    DiagnosticsConfig,
    GridConfig,
    InitConfig,
    MapConfig,
    MonitoringConfig,
    ObserverConfig,
    PlantConfig,
    ScenarioConfig,
    SourceConfig,
)
from .controller import RD1, SCALED
from .errors import SimulationDiverged
from .monitoring import GLOBAL_SEEK
from .plants import CostMap, MapComponent
from .simulation import CSV_COLUMNS, INT_COLUMNS, OPTIONAL_COLUMNS, ClosedLoop, SimTrace, run_simulation

logger = logging.getLogger(__name__)

EXAMPLE1_START_POINTS = (2.0, 4.0, 7.0)
# Reference cap a little below the global peak output (about 1.5003).
EXAMPLE1_REFERENCE_CAP = 1.45
CART_SOURCE_POSITION = 1.5
CART_AMPLITUDE = 4.5
CART_AMBIENT = 0.5
WIDTH_CANDIDATES = tuple(np.round(np.arange(0.25, 4.01, 0.25), 2))


def preset_example1(z0: float = 4.0) -> ScenarioConfig:
    """Two-bump map behind eta' = -eta + z, z' = eta + z + u (global-seek monitoring)."""
    return ScenarioConfig(
        name=f"example1-z0-{z0:g}",
        plant=PlantConfig(kind=NORMAL_FORM, a=((-1.0, 1.0), (1.0, 1.0)), b=(0.0, 1.0), phi2_lower=1.0),
        map=MapConfig(amplitudes=(1.0, 1.5), centers=(3.0, 5.0), widths=(0.5, 1.5)),
        controller=ControllerConfig(
            mode=RD1,
            lam=2.0,
            km=1.0,
            ym0=0.0,
            ysat=EXAMPLE1_REFERENCE_CAP,
            delta=0.1,
            r=0.1,
            L_phi=2.0 / 3.0,
            pi_cap=10.0,
            pi_dwell=0.0,
        ),
        observer=ObserverConfig(lambda0=0.8, gain=2.0),
        monitoring=MonitoringConfig(variant=GLOBAL_SEEK, c_scale=1.0),
        grid=GridConfig(step=1e-3, horizon=15.0),
        init=InitConfig(z0=z0),
    )


def field_peak_slope(amplitude: float, width: float) -> float:
    shape = CostMap(components=(MapComponent(amplitude, 0.0, width),), grid_min=-10.0, grid_max=10.0)
    return shape.derivative_sup()


def calibrate_field_width(amplitude: float, slope_floor: float,
                          candidates: Iterable[float] = WIDTH_CANDIDATES,
                          margin: float = 1.25) -> float:
    """Widest Gaussian whose steepest slope still clears ``margin * slope_floor``."""
    passing = [w for w in candidates if field_peak_slope(amplitude, w) >= margin * slope_floor]
    if not passing:
        raise ValueError(
            f"No candidate width gives a slope above {margin * slope_floor:.4g} "
            f"for amplitude {amplitude}"
        )
    return float(max(passing))


def preset_cart(moving: bool = False, mu: float = 0.5) -> ScenarioConfig:
    """Servo cart (motor z' = -17.2 z + 3.9 v behind an input integrator) seeking a light source."""
    r = 0.2 * math.sqrt(mu)
    slope_floor = 20.0 * r
    width = calibrate_field_width(CART_AMPLITUDE, slope_floor)
    calibration = (
        f"gaussian light field, amplitude {CART_AMPLITUDE:g}, ambient {CART_AMBIENT:g}, "
        f"width {width:g} = widest of {len(WIDTH_CANDIDATES)} candidates with peak slope "
        f">= 1.25 * L_phi ({1.25 * slope_floor:.4g}); cart starts at 0"
    )
    logger.info("Cart field calibration: %s", calibration)
    if moving:
        source = SourceConfig(
            enabled=True, ambient=CART_AMBIENT, sensor_cap=5.0,
            times=(0.0, 15.0, 30.0), positions=(1.5, 1.5, 3.0), off_until=4.0,
        )
    else:
        source = SourceConfig(
            enabled=True, ambient=CART_AMBIENT, sensor_cap=5.0,
            times=(0.0,), positions=(CART_SOURCE_POSITION,),
        )
    return ScenarioConfig(
        name="cart-moving" if moving else "cart-fixed",
        plant=PlantConfig(kind=LINEAR_SENSOR, a=((-17.2,),), b=(3.9,), c=(1.0,), mu=1.0),
        map=MapConfig(amplitudes=(CART_AMPLITUDE,), centers=(0.0,), widths=(width,),
                      grid_min=-10.0, grid_max=10.0),
        source=source,
        controller=ControllerConfig(
            mode=SCALED,
            km=2.0,
            lam=1.0,
            mu=mu,
            ym0=0.0,
            ysat=5.0,
            delta=0.1,
            r=None,
            r_gain=0.2,
            L_phi_gain=20.0,
            kp_ratio=0.2,
        ),
        observer=ObserverConfig(lambda0=1.0, gain=0.0),
        grid=GridConfig(step=1e-3, horizon=30.0),
        init=InitConfig(x0=(0.0,), v0=0.0),
        diagnostics=DiagnosticsConfig(calibration=calibration),
    )


@dataclass(frozen=True)
class RunMetrics:
    first_entry_time: Optional[float]  # None when the vicinity was never reached
    oscillation_amplitude: float  # max |y - y*| over the tail window
    switch_count: int
    max_abs_error: float
    residual_band: float  # max |z - z*(t)| over the tail window


def optimum_track(trace: SimTrace, loop: ClosedLoop) -> np.ndarray:
    if trace.z_star is not None:
        return trace.z_star
    if trace.src is not None:
        return trace.src + loop.diagnostics.z_star
    return np.full(len(trace), loop.optimum(0.0))


def compute_metrics(trace: SimTrace, config: ScenarioConfig,
                    loop: Optional[ClosedLoop] = None) -> RunMetrics:
    loop = loop or ClosedLoop(config)
    z_ref = optimum_track(trace, loop)
    inside = loop.diagnostics.inside(trace.z, z_ref)
    entered = np.nonzero(inside)[0]
    tail = trace.tail(config.diagnostics.tail_fraction)
    return RunMetrics(
        first_entry_time=float(trace.t[entered[0]]) if entered.size else None,
        oscillation_amplitude=float(np.max(np.abs(trace.y[tail] - loop.peak_output()))),
        switch_count=int(trace.k[-1]),
        max_abs_error=float(np.max(np.abs(trace.e))),
        residual_band=float(np.max(np.abs(trace.z[tail] - z_ref[tail]))),
    )


def _cell(value, integer: bool) -> str:
    return str(int(value)) if integer else repr(float(value))


def emit_csv(trace: SimTrace, path: Path) -> Path:
    """Write one row per sample with full-precision decimals.

    Args:
        trace: The run to write.
        path: Destination CSV; parent directories are created.

    Returns:
        The path that was written.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = [getattr(trace, name) for name in CSV_COLUMNS]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for i in range(len(trace)):
            writer.writerow(
                "" if column is None else _cell(column[i], name in INT_COLUMNS)
                for name, column in zip(CSV_COLUMNS, columns)
            )
    return path


def read_csv(path: Path) -> SimTrace:
    """Load a trace written by emit_csv.

    Optional columns that are empty on every row come back as None.

    Raises:
        ValueError: If the header is not the trace header.
    """
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"Unexpected trace header in {path}: {header}")
        rows = list(reader)
    columns = {}
    for j, name in enumerate(CSV_COLUMNS):
        cells = [row[j] for row in rows]
        if name in OPTIONAL_COLUMNS and all(c == "" for c in cells):
            continue
        columns[name] = [int(c) if name in INT_COLUMNS else float(c) for c in cells]
    return SimTrace.from_columns(columns)


def file_checksum(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_metadata(path: Path, config: ScenarioConfig, loop: ClosedLoop, trace: SimTrace,
                   metrics: RunMetrics, status: str, csv_sha256: str = "") -> Path:
    diagnostics = loop.diagnostics
    payload = {
        "scenario": config.to_dict(),
        "status": status,
        "samples": len(trace),
        "effective_gains": asdict(loop.gains),
        "map": {
            "z_star": diagnostics.z_star,
            "y_star": loop.peak_output(),
            "derivative_sup": diagnostics.derivative_sup,
            "L_phi": diagnostics.slope_floor,
            "vicinity": list(diagnostics.vicinity),
            "delta": diagnostics.delta,
        },
        "calibration": config.diagnostics.calibration,
        "metrics": asdict(metrics),
        "warnings": list(trace.warnings),
        "pi_resets": len(trace.pi_resets),
        "csv_sha256": csv_sha256,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2) + "\n")
    return path


@dataclass(frozen=True)
class ScenarioRun:
    status: str  # "completed" or "diverged"
    trace: SimTrace
    metrics: RunMetrics
    csv_path: Optional[Path] = None
    metadata_path: Optional[Path] = None


def run_scenario(config: ScenarioConfig, out_dir: Optional[Path] = None) -> ScenarioRun:
    """Run a scenario and, when ``out_dir`` is given, write trace.csv and metadata.json there.

    A diverged run is returned with status "diverged" and its partial trace.
    ValidationError propagates.
    """
    try:
        trace = run_simulation(config)
        status = "completed"
    except SimulationDiverged as err:
        trace = err.trace
        status = "diverged"
    loop = ClosedLoop(config)
    metrics = compute_metrics(trace, config, loop)
    if out_dir is None:
        return ScenarioRun(status, trace, metrics)
    out_dir = Path(out_dir)
    csv_path = emit_csv(trace, out_dir / "trace.csv")
    meta_path = write_metadata(
        out_dir / "metadata.json", config, loop, trace, metrics, status, file_checksum(csv_path)
    )
    return ScenarioRun(status, trace, metrics, csv_path, meta_path)
