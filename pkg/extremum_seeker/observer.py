"""First-order norm observer for the unmeasured internal state eta."""

import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import ConfigError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ObserverState:
    """eta_bar' = -lambda0 * eta_bar + phi0(z), with phi0(z) = |gain * |z| + offset|."""
    eta_bar: float = 0.0
    lambda0: float = 1.0
    gain: float = 1.0
    offset: float = 0.0

    def input_bound(self, z: float, t: float = 0.0) -> float:
        return abs(self.gain * abs(z) + self.offset)


def observer_step(obs: ObserverState, z: float, t: float, h: float) -> ObserverState:
    """One Euler step of the norm observer.

    Raises:
        ConfigError: If h * lambda0 >= 1, which would let eta_bar go negative.
    """
    if h * obs.lambda0 >= 1.0:
        raise ConfigError(
            f"Observer step h={h} must be below 1/lambda0={1.0 / obs.lambda0:.6g}"
        )
    rate = -obs.lambda0 * obs.eta_bar + obs.input_bound(z, t)
    return replace(obs, eta_bar=obs.eta_bar + h * rate)


@dataclass(frozen=True)
class NormBoundReport:
    passed: bool
    fitted_r: float
    max_excess: float
    first_violation_time: Optional[float] = None


def check_norm_bound(trace, margin: float = 1e-9, lambda0: Optional[float] = None,
                     fit_until: Optional[float] = None) -> NormBoundReport:
    """Check ||eta(t)|| <= eta_bar(t) + R exp(-lambda0 t) along a trace.

    R is fitted on the initial stretch ``t <= fit_until`` (default 1/lambda0)
    as the smallest constant covering it; the remaining samples must then
    respect the same bound up to ``margin``.
    """
    if trace.eta_norm is None:
        raise ValueError("Trace carries no eta diagnostics")
    rate = lambda0 if lambda0 is not None else trace.observer_rate
    if rate is None or not rate > 0:
        raise ValueError("Observer decay rate is unknown for this trace")
    horizon = fit_until if fit_until is not None else 1.0 / rate

    t = trace.t
    gap = trace.eta_norm - trace.eta_bar
    early = t <= horizon
    fitted_r = max(0.0, float(np.max(gap[early] * np.exp(rate * t[early]))))
    excess = gap - fitted_r * np.exp(-rate * t)
    bad = np.nonzero(excess > margin)[0]
    first = float(t[bad[0]]) if bad.size else None
    if first is not None:
        logger.info("Norm bound violated first at t=%.4f (R=%.4g)", first, fitted_r)
    return NormBoundReport(
        passed=bad.size == 0,
        fitted_r=fitted_r,
        max_excess=float(np.max(excess)),
        first_violation_time=first,
    )


def observer_fixed_point(obs: ObserverState, z: float) -> float:
    """Steady value of eta_bar under a constant z."""
    return obs.input_bound(z) / obs.lambda0
