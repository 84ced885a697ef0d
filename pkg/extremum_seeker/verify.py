"""Acceptance suite: runs the preset scenarios and checks each criterion."""

import logging
import math
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from .config import ScenarioConfig, resolve_gains
from .monitoring import bound_check
from .observer import check_norm_bound
from .plants import eval_map, map_derivative
from .scenarios import (
    EXAMPLE1_START_POINTS,
    ScenarioRun,
    emit_csv,
    preset_cart,
    preset_example1,
    run_scenario,
)

logger = logging.getLogger(__name__)

EXAMPLE1_BAND = 0.15
ESCAPE_LEVEL = 3.5
CART_BAND_FACTOR = 3.0
MOVING_BAND_FACTOR = 1.5
MOVING_LAG_LIMIT = 0.5
SOURCE_OFF_DRIFT = 0.25
# Frozen correct-branch run starts below the reference: Phi(4) ~ 0.906 < 1.0.
FROZEN_RIGHT_YM0 = 1.0


@dataclass(frozen=True)
class CriterionResult:
    name: str
    passed: bool
    measured: str
    required: str

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"criterion={self.name} status={status} measured={self.measured} required={self.required}"


def frozen_direction(z0: float, direction: int, ym0: float = 0.0,
                     ysat: Optional[float] = None, horizon: float = 5.0) -> ScenarioConfig:
    """Example 1 with monitoring off, so the relay keeps its initial branch."""
    config = preset_example1(z0)
    return replace(
        config,
        name=f"example1-frozen{direction:+d}",
        controller=replace(config.controller, initial_direction=direction, ym0=ym0, ysat=ysat),
        monitoring=replace(config.monitoring, enabled=False),
        grid=replace(config.grid, horizon=horizon, divergence_bound=1e12),
    )


def zero_crossing_band(e: np.ndarray) -> tuple:
    """(first crossing index or None, max |e| after it, 2 * largest one-step change)."""
    signs = np.sign(e)
    crossing = np.nonzero((signs[:-1] * signs[1:] <= 0))[0]
    band = 2.0 * float(np.max(np.abs(np.diff(e))))
    if crossing.size == 0:
        return None, math.inf, band
    start = int(crossing[0])
    return start, float(np.max(np.abs(e[start:]))), band


def tau_scenario(config: ScenarioConfig, tau_step: float) -> ScenarioConfig:
    """The same scenario simulated in tau = t / mu with step ``tau_step``, over the same physical horizon."""
    mu = config.controller.mu
    return replace(
        config,
        name=f"{config.name}-tau",
        grid=replace(config.grid, time_base="tau", step=tau_step, horizon=config.grid.horizon / mu),
    )


def trajectory_gap(reference, other) -> float:
    """Largest |z| difference after resampling ``other`` onto the reference instants."""
    z = np.interp(reference.t, other.t, other.z)
    return float(np.max(np.abs(z - reference.z)))


class AcceptanceSuite:
    """Runs every criterion; ``break_monitoring`` feeds the monitoring-bound check a run with monitoring off."""

    def __init__(self, out_dir: Optional[Path] = None, break_monitoring: bool = False):
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.break_monitoring = break_monitoring
        self._runs: Dict[str, ScenarioRun] = {}
        self._configs: Dict[str, ScenarioConfig] = {}

    def run_named(self, key: str, config: ScenarioConfig) -> ScenarioRun:
        if key not in self._runs:
            target = None if self.out_dir is None else self.out_dir / key
            self._runs[key] = run_scenario(config, target)
            self._configs[key] = config
            logger.info("Ran %s: %s", key, self._runs[key].status)
        return self._runs[key]

    def example1(self, z0: float) -> ScenarioRun:
        return self.run_named(f"example1_z0_{z0:g}", preset_example1(z0))

    def cart(self, moving: bool) -> ScenarioRun:
        return self.run_named("cart_moving" if moving else "cart_fixed", preset_cart(moving))

    # -- criteria --------------------------------------------------------------

    def global_convergence(self) -> CriterionResult:
        parts, ok = [], True
        for z0 in EXAMPLE1_START_POINTS:
            run = self.example1(z0)
            m = run.metrics
            good = run.status == "completed" and m.first_entry_time is not None \
                and m.oscillation_amplitude <= EXAMPLE1_BAND
            ok &= good
            entry = "none" if m.first_entry_time is None else f"{m.first_entry_time:.3f}"
            parts.append(f"z0={z0:g}:entry={entry},osc={m.oscillation_amplitude:.4f}")
        return CriterionResult("example1-convergence", ok, ";".join(parts),
                               f"entry<inf,osc<={EXAMPLE1_BAND}")

    def local_escape(self) -> CriterionResult:
        z_max = float(np.max(self.example1(2.0).trace.z))
        c_scale = preset_example1(2.0).monitoring.c_scale
        return CriterionResult("local-escape", z_max > ESCAPE_LEVEL,
                               f"max_z={z_max:.4f},c(k)={c_scale:g}/(k+1)",
                               f"max_z>{ESCAPE_LEVEL}")

    def monitoring_bound(self) -> CriterionResult:
        if self.break_monitoring:
            runs = [self.run_named("fault_injection", frozen_direction(4.0, -1))]
        else:
            runs = [self.example1(z0) for z0 in EXAMPLE1_START_POINTS]
            runs += [self.cart(False), self.cart(True)]
        reports = [bound_check(run.trace) for run in runs]
        worst = max(r.max_excess for r in reports)
        violations = sum(r.violations for r in reports)
        return CriterionResult("monitoring-bound", violations == 0,
                               f"violations={violations},max_excess={worst:.3g}", "violations=0")

    def direction_behaviour(self) -> CriterionResult:
        wrong = self.run_named("frozen_wrong", frozen_direction(4.0, -1)).trace
        abs_e = np.abs(wrong.e)
        half = abs_e[len(abs_e) // 2:]
        monotone = bool(np.all(np.diff(half) >= 0))

        right_config = frozen_direction(4.0, 1, ym0=FROZEN_RIGHT_YM0, ysat=1.2)
        right = self.run_named("frozen_right", right_config).trace
        start, after, band = zero_crossing_band(right.e)
        sliding = start is not None and start > 0 and after <= band
        crossing = "none" if start is None else f"{right.t[start]:.3f}"
        return CriterionResult(
            "direction-behaviour", monotone and sliding,
            f"wrong_monotone={monotone},right_crossing_t={crossing},"
            f"right_after_crossing={after:.4g},band={band:.4g}",
            "wrong_monotone=True,right_crossing_t>0,right_after_crossing<=band",
        )

    def cart_fixed(self) -> CriterionResult:
        run = self.cart(False)
        r = resolve_gains(preset_cart(False)).r
        band = CART_BAND_FACTOR * r
        osc = run.metrics.oscillation_amplitude
        return CriterionResult("cart-fixed", run.status == "completed" and osc <= band,
                               f"osc={osc:.4f}", f"osc<={band:.4f}")

    def cart_moving(self) -> CriterionResult:
        run = self.cart(True)
        trace = run.trace
        # relative to the oscillation the fixed-source run actually shows
        band = MOVING_BAND_FACTOR * self.cart(False).metrics.oscillation_amplitude
        motion = trace.between(15.0, 30.0)
        off = trace.between(0.0, 4.0)
        light = float(np.max(np.abs(trace.y[motion] - 5.0)))
        lag = float(np.max(np.abs(trace.z[motion] - trace.src[motion])))
        drift = float(np.max(np.abs(trace.z[off])))
        ok = run.status == "completed" and light <= band and lag <= MOVING_LAG_LIMIT \
            and drift <= SOURCE_OFF_DRIFT
        return CriterionResult(
            "cart-moving", ok, f"light_dev={light:.4f},lag={lag:.4f},off_drift={drift:.4f}",
            f"light_dev<={band:.4f},lag<={MOVING_LAG_LIMIT},off_drift<={SOURCE_OFF_DRIFT}",
        )

    def time_scaling(self) -> CriterionResult:
        """Compare the t-grid cart run with tau-grid runs mapped through t = mu tau.

        A tau step of h/mu reproduces the t grid sample for sample and must
        agree within 10 h. A tau step of h is a genuinely finer physical grid;
        relay switch instants then land on different samples, so the two
        trajectories only agree within the fixed-source allowance of 3 r.
        """
        base = self.cart(False)
        config = preset_cart(False)
        mu = config.controller.mu
        h = config.grid.step
        same = self.run_named("cart_fixed_tau_same", tau_scenario(config, h / mu)).trace
        finer = self.run_named("cart_fixed_tau", tau_scenario(config, h)).trace
        same_gap = trajectory_gap(base.trace, same)
        gap = trajectory_gap(base.trace, finer)
        limit = 10.0 * h
        band = CART_BAND_FACTOR * resolve_gains(config).r
        return CriterionResult(
            "time-scaling", same_gap <= limit and gap <= band,
            f"same_grid_gap={same_gap:.3g},distinct_grid_gap={gap:.4f}",
            f"same_grid_gap<={limit:g},distinct_grid_gap<={band:.4f}",
        )

    def observer_bound(self) -> CriterionResult:
        config = preset_example1(4.0)
        seeded = replace(config, name="example1-observer-seeded",
                         init=replace(config.init, eta0=(0.5,), eta_bar0=1.0))
        seeded_trace = self.run_named("observer_seeded", seeded).trace
        dominated = bool(np.all(seeded_trace.eta_norm <= seeded_trace.eta_bar))
        reports = [check_norm_bound(self.example1(z0).trace) for z0 in EXAMPLE1_START_POINTS]
        fitted = max(r.fitted_r for r in reports)
        ok = dominated and all(r.passed for r in reports)
        return CriterionResult("observer-bound", ok, f"seeded_dominated={dominated},max_R={fitted:.3g}",
                               "seeded_dominated=True,fitted_check=pass")

    def determinism(self) -> CriterionResult:
        identical = True
        with tempfile.TemporaryDirectory() as tmp:
            for key, factory in (("example1_z0_4", lambda: preset_example1(4.0)),
                                 ("cart_fixed", lambda: preset_cart(False)),
                                 ("cart_moving", lambda: preset_cart(True))):
                first = self._runs.get(key) or self.run_named(key, factory())
                second = run_scenario(factory())
                a = emit_csv(first.trace, Path(tmp) / f"{key}_a.csv").read_bytes()
                b = emit_csv(second.trace, Path(tmp) / f"{key}_b.csv").read_bytes()
                identical &= a == b
        cost_map = preset_example1().map.build()
        zs = np.linspace(-10.0, 15.0, 1000)
        step = 1e-6
        fd = np.array([(eval_map(cost_map, z + step) - eval_map(cost_map, z - step)) / (2 * step) for z in zs])
        exact = np.array([map_derivative(cost_map, z) for z in zs])
        oracle = bool(np.allclose(fd, exact, rtol=1e-6, atol=1e-8))
        return CriterionResult("determinism", identical and oracle,
                               f"identical_csv={identical},derivative_oracle={oracle}",
                               "identical_csv=True,derivative_oracle=True")

    def criteria(self) -> List[Callable[[], CriterionResult]]:
        return [
            self.global_convergence,
            self.local_escape,
            self.monitoring_bound,
            self.direction_behaviour,
            self.cart_fixed,
            self.cart_moving,
            self.time_scaling,
            self.observer_bound,
            self.determinism,
        ]

    def run(self) -> List[CriterionResult]:
        results = []
        for check in self.criteria():
            result = check()
            logger.info(result.line())
            results.append(result)
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            (self.out_dir / "verify.txt").write_text("\n".join(r.line() for r in results) + "\n")
        return results
