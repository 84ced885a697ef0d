"""Monitoring function: a decaying envelope on |e| whose violation flips the relay."""

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)

NEW = "new"
LEGACY = "legacy"
GLOBAL_SEEK = "global-seek"
VARIANTS = (NEW, LEGACY, GLOBAL_SEEK)


def growing_term(a: float, t: float) -> float:
    """a * exp(-t / a); for fixed t it grows with a once a is large enough."""
    return a * math.exp(-t / a)


@dataclass(frozen=True)
class SwitchSequences:
    """a(k) = a_slope * k + a_offset (increasing, unbounded); c(k) = c_scale / (k + 1)."""
    a_offset: float = 1.0
    a_slope: float = 1.0
    c_scale: float = 2.0

    def a(self, k: int) -> float:
        return self.a_slope * k + self.a_offset

    def c(self, k: int) -> float:
        return self.c_scale / (k + 1)


@dataclass(frozen=True)
class MonitorState:
    variant: str = NEW
    k: int = 0
    t_k: float = 0.0
    e_k: float = 0.0  # |e(t_k)|
    lam: float = 1.0
    r: float = 0.1
    sequences: SwitchSequences = SwitchSequences()

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"Unknown monitoring variant '{self.variant}'")


def envelope(ms: MonitorState, t: float) -> float:
    """Value of the monitoring function phi_m at ``t`` for the state's variant."""
    if t < ms.t_k:
        raise ValueError(f"Envelope queried at t={t} before the last switch t_k={ms.t_k}")
    decay = ms.e_k * math.exp(-ms.lam * (t - ms.t_k))
    if ms.variant == LEGACY:
        return decay + growing_term(ms.sequences.a(ms.k), t)
    floor = decay + ms.r
    if ms.variant == GLOBAL_SEEK:
        floor += ms.sequences.c(ms.k)
    return floor


def detect_switch(ms: MonitorState, e: float, t: float) -> Tuple[MonitorState, bool]:
    """Register a switch when |e| has reached the envelope (discrete >= rule)."""
    if abs(e) >= envelope(ms, t):
        return replace(ms, k=ms.k + 1, t_k=t, e_k=abs(e)), True
    return ms, False


@dataclass(frozen=True)
class BoundReport:
    passed: bool
    violations: int
    epsilon_step: float
    max_excess: float
    first_violation_time: Optional[float] = None


def bound_check(trace) -> BoundReport:
    """Audit |e| <= phi_m + eps over a trace, eps being the largest one-step rise of |e|."""
    abs_e = np.abs(trace.e)
    rises = np.diff(abs_e)
    epsilon = float(max(0.0, rises.max())) if rises.size else 0.0
    excess = abs_e - trace.phi_m - epsilon
    bad = np.nonzero(excess > 0)[0]
    first = float(trace.t[bad[0]]) if bad.size else None
    if bad.size:
        logger.info("Monitoring bound broken on %d samples, first at t=%.4f", bad.size, first)
    return BoundReport(
        passed=bad.size == 0,
        violations=int(bad.size),
        epsilon_step=epsilon,
        max_excess=float(excess.max()) if excess.size else 0.0,
        first_violation_time=first,
    )
