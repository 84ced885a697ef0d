"""Unit tests for the norm observer."""

import numpy as np
import pytest

from extremum_seeker.config import apply_overrides
from extremum_seeker.errors import ConfigError
from extremum_seeker.observer import (
    ObserverState,
    check_norm_bound,
    observer_fixed_point,
    observer_step,
)
from extremum_seeker.scenarios import preset_example1, run_scenario
from tests.conftest import make_trace


def example1_observer(eta_bar=0.0):
    return ObserverState(eta_bar=eta_bar, lambda0=0.8, gain=2.0)


class TestObserverStep:
    """Tests for observer_step."""

    def test_example1_step(self):
        """Test one step with phi0 = 2|z| from rest."""
        assert observer_step(example1_observer(), 1.0, 0.0, 0.001).eta_bar == pytest.approx(0.002)

    def test_pure_decay(self):
        """Test decay with z = 0."""
        assert observer_step(example1_observer(1.0), 0.0, 0.0, 0.001).eta_bar == pytest.approx(0.9992)

    def test_input_is_nonnegative(self):
        """Test that phi0 uses |z| so negative z still drives eta_bar up."""
        assert observer_step(example1_observer(), -1.0, 0.0, 0.001).eta_bar == pytest.approx(0.002)

    def test_fixed_point(self):
        """Test convergence to 2/0.8 under constant z = 1."""
        obs = example1_observer()
        for _ in range(20000):
            obs = observer_step(obs, 1.0, 0.0, 0.001)
        assert obs.eta_bar == pytest.approx(2.5, abs=1e-5)
        assert observer_fixed_point(obs, 1.0) == pytest.approx(2.5)

    def test_step_too_large(self):
        """Test that h >= 1/lambda0 is refused."""
        with pytest.raises(ConfigError, match="below 1/lambda0"):
            observer_step(example1_observer(), 1.0, 0.0, 1.25)

    def test_stays_nonnegative(self):
        """Test nonnegativity along a rough input sequence."""
        obs = example1_observer()
        for z in np.sin(np.arange(5000) * 0.37) * 10:
            obs = observer_step(obs, float(z), 0.0, 0.01)
            assert obs.eta_bar >= 0.0


class TestCheckNormBound:
    """Tests for check_norm_bound."""

    def test_decaying_pair_passes(self):
        """Test eta_bar(0) = ||eta(0)|| with z = 0: both decay, the observer slower."""
        t = np.arange(0, 10.0, 0.01)
        trace = make_trace(len(t), 0.01, eta_norm=np.exp(-t), eta_bar=np.exp(-0.8 * t))
        report = check_norm_bound(trace, lambda0=0.8)
        assert report.passed
        assert report.fitted_r == 0.0

    def test_example1_passes_with_zero_r(self, example1_runs):
        """Test that the Example 1 runs need no decaying slack."""
        for run in example1_runs.values():
            report = check_norm_bound(run.trace)
            assert report.passed
            assert report.fitted_r == 0.0
            assert np.all(run.trace.eta_norm <= run.trace.eta_bar)

    def test_seeded_observer_dominates(self):
        """Test ||eta|| <= eta_bar at every sample when eta_bar(0) >= ||eta(0)||."""
        config = apply_overrides(preset_example1(4.0), ["init.eta0=[0.5]", "init.eta_bar0=1.0"])
        trace = run_scenario(config).trace
        assert np.all(trace.eta_norm <= trace.eta_bar)

    def test_misspecified_gain_is_caught(self):
        """Test that an observer gain of 0.1 cannot bound eta."""
        config = apply_overrides(preset_example1(4.0), ["observer.gain=0.1"])
        report = check_norm_bound(run_scenario(config).trace)
        assert not report.passed
        assert report.first_violation_time is not None

    def test_needs_eta_column(self):
        """Test that traces without eta diagnostics are refused."""
        with pytest.raises(ValueError, match="eta diagnostics"):
            check_norm_bound(make_trace(), lambda0=1.0)
