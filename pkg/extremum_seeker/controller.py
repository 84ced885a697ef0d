"""Relay control law, ramp reference model and the two modulation designs."""

import logging
from dataclasses import dataclass, replace
from typing import Optional

from .errors import ConfigError
from .monitoring import SwitchSequences, growing_term

logger = logging.getLogger(__name__)

RD1 = "rd1"
SCALED = "scaled"
MODES = (RD1, SCALED)


@dataclass(frozen=True)
class DominationBounds:
    """Known bounding functions of the relative-degree-one design.

    alpha1(s) = alpha1_gain * s, phi1(z) = phi1_gain * |z| + phi1_offset and
    phibar(s) = phibar_max + phibar_slope * s, where phibar_max defaults to
    sup |Phi'| computed from the map.
    """
    alpha1_gain: float = 1.0
    phi1_gain: float = 1.0
    phi1_offset: float = 0.0
    phibar_max: float = 1.0
    phibar_slope: float = 0.0

    def alpha1(self, s: float) -> float:
        return self.alpha1_gain * s

    def phi1(self, z: float, t: float) -> float:
        return self.phi1_gain * abs(z) + self.phi1_offset

    def phibar(self, s: float) -> float:
        return self.phibar_max + self.phibar_slope * s


@dataclass(frozen=True)
class ControllerState:
    mode: str = RD1
    sigma: int = 1  # +1 selects u+ = -rho sgn(e)
    rho: float = 0.0
    delta: float = 0.1
    kp_lower: float = 1.0
    lam: float = 1.0  # effective (already scaled in scaled mode)
    km: float = 1.0  # effective
    mu: float = 1.0
    k_pi: int = 0
    pi_enabled: bool = True
    pi_cap: float = 10.0
    pi_dwell: float = 1.0
    pi_sequence: SwitchSequences = SwitchSequences()

    def pi_term(self, t: float) -> float:
        if not self.pi_enabled:
            return 0.0
        return growing_term(self.pi_sequence.a(self.k_pi), t)


@dataclass(frozen=True)
class ReferenceModel:
    y_m: float = 0.0
    km: float = 1.0
    y_sat: Optional[float] = None


def sgn(x: float) -> int:
    return (x > 0) - (x < 0)


def control_output(cs: ControllerState, e: float) -> float:
    """Relay law u = -sigma rho sgn(e).

    Args:
        cs: Controller state carrying sigma and the current rho.
        e: Output error y - y_m; e = 0 gives u = 0.

    Returns:
        The control input for this sample.
    """
    return -cs.sigma * cs.rho * sgn(e)


def flip_direction(cs: ControllerState) -> ControllerState:
    """Swap the relay branch and advance the Pi index (when Pi is enabled)."""
    k_pi = cs.k_pi + 1 if cs.pi_enabled else cs.k_pi
    return replace(cs, sigma=-cs.sigma, k_pi=k_pi)


def reference_step(rm: ReferenceModel, h: float) -> ReferenceModel:
    """Euler step of y_m' = km, held at y_sat once it gets there.

    Args:
        rm: Current reference state.
        h: Physical step in seconds.

    Returns:
        The reference one step later.
    """
    y_m = rm.y_m + h * rm.km
    if rm.y_sat is not None:
        y_m = min(y_m, rm.y_sat)
    return replace(rm, y_m=y_m)


def _nonnegative(name: str, value: float) -> float:
    if value < 0:
        raise ConfigError(f"Bound function {name} returned a negative value ({value})")
    return value


def modulation_rd1(cs: ControllerState, e: float, eta_bar: float, z: float, t: float,
                   bounds: DominationBounds) -> float:
    """rho = [phi1_bar * Phibar + Phibar**2 + km + lam |e|] / kp + Pi(k_pi) + delta."""
    phi1_bar = _nonnegative("alpha1", bounds.alpha1(2.0 * abs(eta_bar))) + _nonnegative(
        "phi1", bounds.phi1(z, t)
    )
    phibar = _nonnegative("phibar", bounds.phibar(abs(z)))
    dominated = phi1_bar * phibar + phibar ** 2 + cs.km + cs.lam * abs(e)
    return dominated / cs.kp_lower + cs.pi_term(t) + cs.delta


def modulation_scaled(cs: ControllerState, e: float) -> float:
    """rho = (mu / kp) (km + lam |e|) + mu * delta, with km and lam already scaled by mu."""
    return cs.mu / cs.kp_lower * (cs.km + cs.lam * abs(e)) + cs.mu * cs.delta


def reset_pi(cs: ControllerState, t: float, quiet_since: float) -> ControllerState:
    """Restart the Pi sequence once it exceeds its cap and no switch happened for ``pi_dwell``."""
    if cs.mode != RD1 or not cs.pi_enabled or cs.k_pi == 0:
        return cs
    if cs.pi_term(t) > cs.pi_cap and t - quiet_since >= cs.pi_dwell:
        logger.debug("Pi reset at t=%.4f from k=%d", t, cs.k_pi)
        return replace(cs, k_pi=0)
    return cs
