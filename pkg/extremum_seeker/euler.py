"""Fixed-step time grid and the explicit Euler update used by every model."""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import SimulationFault


@dataclass(frozen=True)
class TimeGrid:
    """Uniform sampling of [0, horizon] with spacing ``step_size``."""
    step_size: float = 1e-3  # seconds
    horizon: float = 15.0  # seconds

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if self.horizon < self.step_size:
            raise ValueError(
                f"horizon ({self.horizon}) must be at least one step ({self.step_size})"
            )

    @property
    def samples(self) -> int:
        # The small epsilon keeps T/h = 15000.000000000002 from dropping a sample.
        return int(math.floor(self.horizon / self.step_size + 1e-9)) + 1

    def times(self, scale: float = 1.0) -> np.ndarray:
        """Sample instants, optionally mapped through t = scale * tau."""
        return np.arange(self.samples) * (self.step_size * scale)


def euler_step(state, derivative, h: float, index: Optional[int] = None) -> np.ndarray:
    """Return ``state + h * derivative`` elementwise.

    Raises SimulationFault when either vector holds NaN or Inf; ``index`` is
    the sample being advanced and is carried on the exception.
    """
    if not h > 0:
        raise ValueError(f"Euler step must be positive, got {h}")
    x = np.asarray(state, dtype=float)
    dx = np.asarray(derivative, dtype=float)
    if x.shape != dx.shape:
        raise ValueError(f"State shape {x.shape} does not match derivative shape {dx.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(dx))):
        raise SimulationFault("Non-finite value in Euler step", index)
    return x + h * dx
