"""Plant families and the static output maps they feed.

Two plant forms are supported: a normal-form plant with relative degree one
(internal state eta, output coordinate z) and a Hurwitz linear system driven
through an input integrator (sensor form). The measured output is always a
static map of z: either a ``CostMap`` or a ``SourceField`` that places a map
around a moving source.
"""

import logging
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import linalg
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .errors import ConfigError
from .euler import euler_step

logger = logging.getLogger(__name__)

GAUSSIAN_MIXTURE = "gaussian-mixture"
QUADRATIC = "quadratic"
USER_TABLE = "user-table"
MAP_KINDS = (GAUSSIAN_MIXTURE, QUADRATIC, USER_TABLE)


@dataclass(frozen=True)
class MapComponent:
    """One bump ``amplitude * exp(-(z - center)**2 / width)``."""
    amplitude: float
    center: float
    width: float


@dataclass(frozen=True)
class CostMap:
    """The unknown static map y = Phi(z).

    Only the diagnostics (maximizer, derivative bounds, vicinity) look at
    the derivative; the controller sees nothing but values.
    """
    kind: str = GAUSSIAN_MIXTURE
    components: Tuple[MapComponent, ...] = ()
    # quadratic: peak - curvature * (z - center)**2
    peak: float = 0.0
    center: float = 0.0
    curvature: float = 1.0
    # user-table knots
    table_points: Tuple[float, ...] = ()
    table_values: Tuple[float, ...] = ()
    # verification grid for the numeric diagnostics
    grid_min: float = -10.0
    grid_max: float = 15.0
    grid_points: int = 5001

    def __post_init__(self):
        if self.kind not in MAP_KINDS:
            raise ConfigError(f"Unknown map kind '{self.kind}', expected one of {MAP_KINDS}")
        if self.kind == GAUSSIAN_MIXTURE:
            if not self.components:
                raise ConfigError("A gaussian-mixture map needs at least one component")
            for comp in self.components:
                if not comp.width > 0:
                    raise ConfigError(f"Map component widths must be positive, got {comp.width}")
        elif self.kind == QUADRATIC:
            if not self.curvature > 0:
                raise ConfigError(f"Quadratic map curvature must be positive, got {self.curvature}")
        else:
            if len(self.table_points) < 3 or len(self.table_points) != len(self.table_values):
                raise ConfigError("A user-table map needs at least 3 points and as many values")
            if np.any(np.diff(self.table_points) <= 0):
                raise ConfigError("User-table points must be strictly increasing")
        if not self.grid_max > self.grid_min or self.grid_points < 3:
            raise ConfigError("Map verification grid is empty")

    @cached_property
    def _table(self) -> PchipInterpolator:
        return PchipInterpolator(self.table_points, self.table_values, extrapolate=True)

    def value(self, z):
        """Phi(z); accepts a scalar or an array."""
        if self.kind == GAUSSIAN_MIXTURE:
            return sum(c.amplitude * np.exp(-((z - c.center) ** 2) / c.width) for c in self.components)
        if self.kind == QUADRATIC:
            return self.peak - self.curvature * (z - self.center) ** 2
        return self._table(z)

    def slope(self, z):
        """Analytic Phi'(z) (interpolant derivative for user tables)."""
        if self.kind == GAUSSIAN_MIXTURE:
            return sum(
                -2.0 * c.amplitude * (z - c.center) / c.width * np.exp(-((z - c.center) ** 2) / c.width)
                for c in self.components
            )
        if self.kind == QUADRATIC:
            return -2.0 * self.curvature * (z - self.center)
        return self._table(z, 1)

    def grid(self) -> np.ndarray:
        return np.linspace(self.grid_min, self.grid_max, self.grid_points)

    @cached_property
    def _maximizer(self) -> Tuple[float, float]:
        zs = self.grid()
        i = int(np.argmax(self.value(zs)))
        z_star = float(zs[i])
        if 0 < i < len(zs) - 1:
            lo, hi = float(zs[i - 1]), float(zs[i + 1])
            if self.slope(lo) > 0 > self.slope(hi):
                z_star = brentq(lambda s: float(self.slope(s)), lo, hi, xtol=1e-14, rtol=1e-15)
        return z_star, float(self.value(z_star))

    def maximizer(self) -> Tuple[float, float]:
        """Global maximizer (z*, y*) located on the verification grid and refined."""
        return self._maximizer

    def derivative_sup(self) -> float:
        """sup |Phi'| over the verification grid."""
        return float(np.max(np.abs(self.slope(self.grid()))))

    def delta_vicinity(self, slope_floor: float) -> Tuple[float, float]:
        """Largest interval around z* on which |Phi'| stays below ``slope_floor``.

        Ends that never reach the floor are clipped to the verification grid.
        """
        if not slope_floor > 0:
            raise ConfigError(f"L_Phi must be positive, got {slope_floor}")
        z_star, _ = self.maximizer()
        dz = (self.grid_max - self.grid_min) / (self.grid_points - 1) / 4.0

        def edge(direction: float, limit: float) -> float:
            count = max(int(abs(limit - z_star) / dz), 1)
            zs = z_star + direction * dz * np.arange(1, count + 1)
            hits = np.nonzero(np.abs(self.slope(zs)) >= slope_floor)[0]
            if hits.size == 0:
                return float(limit)
            j = int(hits[0])
            inner = z_star if j == 0 else float(zs[j - 1])
            return brentq(lambda s: abs(float(self.slope(s))) - slope_floor, inner, float(zs[j]))

        return edge(-1.0, self.grid_min), edge(1.0, self.grid_max)


@dataclass(frozen=True)
class MapDiagnostics:
    """Ground-truth facts about a map used by metrics and bound construction."""
    z_star: float
    y_star: float
    derivative_sup: float
    slope_floor: float
    vicinity: Tuple[float, float]

    @property
    def delta(self) -> float:
        """Full width of the symmetric vicinity |z - z*| < delta / 2."""
        lo, hi = self.vicinity
        return 2.0 * min(self.z_star - lo, hi - self.z_star)

    def inside(self, z, optimum: Optional[float] = None):
        """Whether z lies in the vicinity; ``optimum`` shifts it for a moving source."""
        shift = 0.0 if optimum is None else np.asarray(optimum) - self.z_star
        lo, hi = self.vicinity
        return (np.asarray(z) > lo + shift) & (np.asarray(z) < hi + shift)


def diagnose_map(cost_map: CostMap, slope_floor: float) -> MapDiagnostics:
    """Locate the maximum of a map and the region where its slope falls below a floor.

    Args:
        cost_map: The output map Phi.
        slope_floor: L_Phi; outside the returned vicinity |Phi'| stays at or above it.

    Returns:
        MapDiagnostics with z*, y*, sup |Phi'| and the Delta-vicinity around z*.
    """
    z_star, y_star = cost_map.maximizer()
    diagnostics = MapDiagnostics(
        z_star=z_star,
        y_star=y_star,
        derivative_sup=cost_map.derivative_sup(),
        slope_floor=slope_floor,
        vicinity=cost_map.delta_vicinity(slope_floor),
    )
    logger.debug("Map diagnostics: %s", diagnostics)
    return diagnostics


def eval_map(cost_map: CostMap, z: float) -> float:
    """Return Phi(z) as a plain float.

    Args:
        cost_map: The output map.
        z: Plant output, any real value; tails far from the grid decay to 0.
    """
    return float(cost_map.value(z))


def map_derivative(cost_map: CostMap, z: float) -> float:
    """Exact Phi'(z) for analytic maps, the PCHIP slope for tables."""
    return float(cost_map.slope(z))


# -- normal form ---------------------------------------------------------------

@dataclass(frozen=True)
class NormalFormDynamics:
    """Right-hand side of eta' = phi0(eta, z, t), z' = phi1(eta, z, t) + phi2(eta, z, t) u."""
    phi0: Callable[[np.ndarray, float, float], np.ndarray]
    phi1: Callable[[np.ndarray, float, float], float]
    phi2: Callable[[np.ndarray, float, float], float]
    phi2_lower: float = 1.0

    @classmethod
    def from_matrices(cls, a, b, phi2_lower: float) -> "NormalFormDynamics":
        """Linear normal form x' = A x + B u with z the last coordinate of x."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        n = a.shape[0]
        if a.shape != (n, n) or n < 1:
            raise ConfigError(f"Plant matrix must be square, got shape {a.shape}")
        if b.shape != (n,):
            raise ConfigError(f"Input vector must have {n} entries, got {b.shape}")
        if np.any(b[:-1] != 0.0):
            raise ConfigError("Normal-form input must enter only the z equation")
        if not phi2_lower > 0:
            raise ConfigError(f"phi2_lower must be positive, got {phi2_lower}")
        a_eta, a_ez = a[:-1, :-1], a[:-1, -1]
        a_ze, a_zz = a[-1, :-1], float(a[-1, -1])
        b_z = float(b[-1])
        return cls(
            phi0=lambda eta, z, t: a_eta @ eta + a_ez * z,
            phi1=lambda eta, z, t: float(a_ze @ eta) + a_zz * z,
            phi2=lambda eta, z, t: b_z,
            phi2_lower=phi2_lower,
        )


@dataclass(frozen=True)
class NormalFormPlant:
    dynamics: NormalFormDynamics
    eta: np.ndarray
    z: float

    def output(self) -> float:
        return self.z

    def eta_norm(self) -> float:
        return float(np.linalg.norm(self.eta)) if self.eta.size else 0.0

    def phi2_breached(self, t: float) -> bool:
        """True when |phi2| drops below its declared lower bound at the current state."""
        return abs(self.dynamics.phi2(self.eta, self.z, t)) < self.dynamics.phi2_lower


def step_normal_form(plant: NormalFormPlant, u: float, t: float, h: float,
                     index: Optional[int] = None) -> NormalFormPlant:
    dyn = plant.dynamics
    eta, z = plant.eta, plant.z
    state = np.append(eta, z)
    derivative = np.append(dyn.phi0(eta, z, t), dyn.phi1(eta, z, t) + dyn.phi2(eta, z, t) * u)
    nxt = euler_step(state, derivative, h, index)
    return replace(plant, eta=nxt[:-1], z=float(nxt[-1]))


# -- sensor form ---------------------------------------------------------------

@dataclass(frozen=True)
class SensorDynamics:
    """mu x' = A x + B v with z = C x; A must be Hurwitz and C A^-1 B nonzero."""
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    mu: float = 1.0

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        n = a.shape[0]
        b = np.asarray(self.b, dtype=float).reshape(-1)
        c = np.asarray(self.c, dtype=float).reshape(-1)
        if a.shape != (n, n) or b.shape != (n,) or c.shape != (n,):
            raise ConfigError(
                f"Sensor-form shapes do not agree: A{a.shape}, B{b.shape}, C{c.shape}"
            )
        if not 0 < self.mu <= 1:
            raise ConfigError(f"plant mu must lie in (0, 1], got {self.mu}")
        poles = linalg.eigvals(a)
        if np.any(poles.real >= 0):
            raise ConfigError(f"Sensor-form matrix A is not Hurwitz (eigenvalues {poles})")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        if self.dc_gain() == 0.0:
            raise ConfigError("C A^-1 B is zero; the output does not see the input")

    def dc_gain(self) -> float:
        """Static gain -C A^-1 B from v to z."""
        return float(-self.c @ linalg.solve(self.a, self.b))

    def high_frequency_gain(self, slope: float) -> float:
        """HFG of y in the singular limit: Phi'(z) times the static gain."""
        return slope * self.dc_gain()


@dataclass(frozen=True)
class LinearSensorPlant:
    dynamics: SensorDynamics
    x: np.ndarray
    v: float = 0.0

    def output(self) -> float:
        return float(self.dynamics.c @ self.x)

    def eta_norm(self) -> float:
        return 0.0


def _sensor_rates(plant: LinearSensorPlant) -> np.ndarray:
    dyn = plant.dynamics
    return dyn.a @ plant.x + dyn.b * plant.v


def step_linear_sensor(plant: LinearSensorPlant, u: float, h: float,
                       index: Optional[int] = None) -> LinearSensorPlant:
    """Advance mu x' = A x + B v, v' = u by one physical step ``h``."""
    derivative = np.append(_sensor_rates(plant) / plant.dynamics.mu, u)
    nxt = euler_step(np.append(plant.x, plant.v), derivative, h, index)
    return replace(plant, x=nxt[:-1], v=float(nxt[-1]))


def step_linear_sensor_tau(plant: LinearSensorPlant, u: float, h_tau: float, scale: float,
                           index: Optional[int] = None) -> LinearSensorPlant:
    """Advance the time-scaled system v' = scale u, x' = (scale / mu)(A x + B v) by one tau step."""
    derivative = np.append((scale / plant.dynamics.mu) * _sensor_rates(plant), scale * u)
    nxt = euler_step(np.append(plant.x, plant.v), derivative, h_tau, index)
    return replace(plant, x=nxt[:-1], v=float(nxt[-1]))


# -- light field ---------------------------------------------------------------

@dataclass(frozen=True)
class SourceSchedule:
    """Piecewise-linear source position; the source emits nothing before ``off_until``."""
    times: Tuple[float, ...] = (0.0,)
    positions: Tuple[float, ...] = (0.0,)
    off_until: float = 0.0

    def __post_init__(self):
        if not self.times or len(self.times) != len(self.positions):
            raise ConfigError("Source schedule needs matching, non-empty times and positions")
        if np.any(np.diff(self.times) <= 0):
            raise ConfigError("Source schedule times must be strictly increasing")

    def position(self, t: float) -> float:
        return float(np.interp(t, self.times, self.positions))

    def is_on(self, t: float) -> bool:
        return t >= self.off_until


@dataclass(frozen=True)
class SourceField:
    """Sensor reading around a source: ambient + shape(p - s(t)), clipped at the sensor cap."""
    shape: CostMap
    schedule: SourceSchedule = SourceSchedule()
    ambient: float = 0.0
    sensor_cap: float = 5.0

    def __post_init__(self):
        if self.ambient < 0:
            raise ConfigError(f"Ambient offset must be nonnegative, got {self.ambient}")
        if not self.sensor_cap > 0:
            raise ConfigError(f"Sensor cap must be positive, got {self.sensor_cap}")

    def optimum(self, t: float) -> float:
        """Cart position of maximum reading at time t."""
        return self.schedule.position(t) + self.shape.maximizer()[0]

    def peak_output(self) -> float:
        return min(self.ambient + self.shape.maximizer()[1], self.sensor_cap)


def source_output(field: SourceField, p: float, t: float) -> float:
    """Sensor reading at cart position ``p``: ambient plus the light, clipped at the cap.

    While the source is off only the ambient level is seen.
    """
    light = eval_map(field.shape, p - field.schedule.position(t)) if field.schedule.is_on(t) else 0.0
    return min(field.ambient + light, field.sensor_cap)
