"""Unit tests for the controller module."""

import math

import numpy as np
import pytest

from extremum_seeker.controller import (
    SCALED,
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
from extremum_seeker.config import apply_overrides
from extremum_seeker.errors import ConfigError
from extremum_seeker.scenarios import preset_example1, run_scenario
from extremum_seeker.verify import frozen_direction, zero_crossing_band

M_PHI = 1.29


def example1_controller(**changes):
    settings = dict(lam=2.0, km=1.0, kp_lower=2.0 / 3.0, delta=0.1)
    settings.update(changes)
    return ControllerState(**settings)


def cart_controller(**changes):
    r = 0.2 * math.sqrt(0.5)
    settings = dict(mode=SCALED, mu=0.5, km=1.0, lam=0.5, kp_lower=0.2 * 20 * r, delta=0.1,
                    pi_enabled=False)
    settings.update(changes)
    return ControllerState(**settings)


class TestControlOutput:
    """Tests for the relay law."""

    def test_positive_branch(self):
        """Test u+ = -rho sgn(e)."""
        assert control_output(ControllerState(sigma=1, rho=2.0), 0.5) == -2.0

    def test_negative_branch(self):
        """Test u- = +rho sgn(e)."""
        assert control_output(ControllerState(sigma=-1, rho=2.0), 0.5) == 2.0

    def test_zero_error(self):
        """Test sgn(0) = 0 on both branches."""
        assert control_output(ControllerState(sigma=1, rho=2.0), 0.0) == 0.0
        assert control_output(ControllerState(sigma=-1, rho=2.0), 0.0) == 0.0


class TestFlipDirection:
    """Tests for flip_direction."""

    def test_flip(self):
        """Test that sigma changes sign and the Pi index advances."""
        cs = flip_direction(ControllerState(sigma=1))
        assert cs.sigma == -1
        assert cs.k_pi == 1

    def test_involution(self):
        """Test that two flips restore the direction."""
        assert flip_direction(flip_direction(ControllerState(sigma=1))).sigma == 1

    def test_flips_match_switches(self, example1_runs, cart_fixed_run):
        """Test that sigma flips exactly at the samples where k increments."""
        for run in list(example1_runs.values()) + [cart_fixed_run]:
            flips = np.nonzero(np.diff(run.trace.sigma) != 0)[0]
            switches = np.nonzero(np.diff(run.trace.k) != 0)[0]
            np.testing.assert_array_equal(flips, switches)
            assert len(flips) == run.trace.k[-1]


class TestReferenceModel:
    """Tests for reference_step."""

    def test_ramp(self):
        """Test one ramp step."""
        assert reference_step(ReferenceModel(y_m=0.0, km=1.0), 0.001).y_m == pytest.approx(0.001)

    def test_saturated(self):
        """Test that the cap holds."""
        assert reference_step(ReferenceModel(y_m=5.0, km=1.0, y_sat=5.0), 0.001).y_m == 5.0

    def test_cart_slope(self, cart_fixed_run):
        """Test k_m = 2 mu = 1 in the cart run until saturation at 5."""
        trace = cart_fixed_run.trace
        early = trace.between(0.0, 4.0)
        np.testing.assert_allclose(trace.y_m[early], trace.t[early], atol=1e-9)
        assert trace.y_m.max() == 5.0


class TestModulation:
    """Tests for both modulation designs."""

    def test_rd1_at_origin(self):
        """Test (M^2 + 1) / (2/3) + Pi(0) + delta with phibar(s) = M + s."""
        bounds = DominationBounds(phibar_max=M_PHI, phibar_slope=1.0)
        rho = modulation_rd1(example1_controller(), 0.0, 0.0, 0.0, 0.0, bounds)
        assert rho == pytest.approx((M_PHI ** 2 + 1.0) / (2.0 / 3.0) + 1.0 + 0.1)

    def test_pi_term_at_start(self):
        """Test Pi(0) = 1 at t = 0 with a(k) = k + 1."""
        assert example1_controller().pi_term(0.0) == 1.0

    def test_rd1_floor(self):
        """Test that rho = delta with every bound, gain and Pi removed."""
        bounds = DominationBounds(alpha1_gain=0.0, phi1_gain=0.0, phibar_max=0.0)
        cs = example1_controller(km=0.0, lam=0.0, pi_enabled=False)
        assert modulation_rd1(cs, 0.7, 1.0, 3.0, 2.0, bounds) == pytest.approx(0.1)

    def test_rd1_full_expression(self):
        """Test the expression at a generic state."""
        bounds = DominationBounds(phibar_max=1.2)
        cs = example1_controller(k_pi=2)
        e, eta_bar, z, t = -0.3, 0.5, 4.0, 2.0
        phi1_bar = 2 * eta_bar + z
        expected = (phi1_bar * 1.2 + 1.44 + 1.0 + 2.0 * 0.3) / (2.0 / 3.0) + 3.0 * math.exp(-t / 3.0) + 0.1
        assert modulation_rd1(cs, e, eta_bar, z, t, bounds) == pytest.approx(expected)

    def test_negative_bound_rejected(self):
        """Test that a negative bound output is a configuration error."""
        bounds = DominationBounds(phi1_offset=-5.0)
        with pytest.raises(ConfigError, match="phi1"):
            modulation_rd1(example1_controller(), 0.0, 0.0, 0.0, 0.0, bounds)

    def test_scaled_cart_value(self):
        """Test the cart modulation at e = 0."""
        assert modulation_scaled(cart_controller(), 0.0) == pytest.approx(0.9339, abs=1e-4)

    def test_scaled_floor(self):
        """Test rho = mu delta with no ramp and no error."""
        assert modulation_scaled(cart_controller(km=0.0), 0.0) == pytest.approx(0.05)

    def test_scaled_is_affine(self):
        """Test that doubling |e| adds mu lam |e| / kp."""
        cs = cart_controller()
        gap = modulation_scaled(cs, 0.8) - modulation_scaled(cs, 0.4)
        assert gap == pytest.approx(cs.mu * cs.lam * 0.4 / cs.kp_lower)

    def test_floors_hold_on_traces(self, example1_runs, cart_fixed_run):
        """Test rho >= delta (rd1) and rho >= mu delta (scaled) on every sample."""
        for run in example1_runs.values():
            assert np.all(run.trace.rho >= 0.1)
        assert np.all(cart_fixed_run.trace.rho >= 0.05)


class TestResetPi:
    """Tests for reset_pi."""

    def test_reset_after_quiet_dwell(self):
        """Test that Pi above the cap restarts after the dwell."""
        cs = example1_controller(k_pi=14, pi_dwell=1.0)
        assert cs.pi_term(2.0) > 10.0
        assert reset_pi(cs, 2.0, 0.5).k_pi == 0

    def test_no_reset_without_dwell(self):
        """Test that a recent switch blocks the restart."""
        cs = example1_controller(k_pi=14, pi_dwell=1.0)
        assert reset_pi(cs, 2.0, 1.5).k_pi == 14

    def test_below_cap(self):
        """Test that a small Pi is left alone."""
        cs = example1_controller(k_pi=1, pi_dwell=0.0)
        assert cs.pi_term(3.0) < 0.5
        assert reset_pi(cs, 3.0, 0.0).k_pi == 1

    def test_dwell_rule_in_closed_loop(self):
        """Test that Example 1 with a 50 ms dwell restarts Pi only after 50 ms without a switch."""
        config = apply_overrides(
            preset_example1(2.0),
            ["controller.pi_cap=0.01", "controller.pi_dwell=0.05", "grid.horizon=4.0"],
        )
        trace = run_scenario(config).trace
        assert trace.k[-1] > 0
        assert len(trace.pi_resets) > 0
        for t, quiet_since in trace.pi_resets:
            assert t - quiet_since >= 0.05

    def test_pi_removed(self):
        """Test that a first-order plant may drop Pi entirely."""
        cs = example1_controller(pi_enabled=False, k_pi=0)
        assert cs.pi_term(0.0) == 0.0
        assert flip_direction(cs).k_pi == 0


class TestFrozenDirection:
    """Closed-loop behaviour with the relay branch held fixed."""

    def test_wrong_direction_error_grows(self):
        """Test that |e| increases monotonically over the second half of a 5 s run."""
        trace = run_scenario(frozen_direction(4.0, -1)).trace
        abs_e = np.abs(trace.e)
        assert np.all(np.diff(abs_e[len(abs_e) // 2:]) >= 0)

    def test_right_direction_slides(self):
        """Test that e starts nonzero, crosses zero after a few steps, then stays within a one-step band."""
        trace = run_scenario(frozen_direction(4.0, 1, ym0=1.0, ysat=1.2)).trace
        assert trace.e[0] < 0.0
        start, after, band = zero_crossing_band(trace.e)
        assert start is not None
        assert start > 0
        assert after <= band
        assert trace.y_m[start] < 1.2
