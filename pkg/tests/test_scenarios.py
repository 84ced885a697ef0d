"""Tests for presets, run metrics and trace artifacts."""

import json
import math
from dataclasses import replace

import numpy as np
import pytest

from extremum_seeker.config import resolve_gains, validate
from extremum_seeker.scenarios import (
    calibrate_field_width,
    compute_metrics,
    emit_csv,
    field_peak_slope,
    preset_cart,
    preset_example1,
    read_csv,
    run_scenario,
)
from extremum_seeker.simulation import CSV_COLUMNS, ClosedLoop
from extremum_seeker.verify import frozen_direction
from tests.conftest import make_trace


class TestPresets:
    """Tests for the built-in scenarios."""

    @pytest.mark.parametrize("config", [
        preset_example1(2.0), preset_example1(7.0), preset_cart(False), preset_cart(True),
    ])
    def test_presets_validate(self, config):
        """Test that every preset passes validation."""
        assert validate(config) == []

    def test_cart_gains(self):
        """Test r = 0.2 sqrt(mu), L_phi = 20 r and kp = 0.2 L_phi at mu = 0.5."""
        gains = resolve_gains(preset_cart(False))
        assert gains.r == pytest.approx(0.2 * math.sqrt(0.5))
        assert gains.L_phi == pytest.approx(20 * gains.r)
        assert gains.kp_lower == pytest.approx(0.2 * gains.L_phi)
        assert gains.km == pytest.approx(1.0)
        assert gains.lam == pytest.approx(0.5)

    def test_field_width(self):
        """Test that the light field calibrates to width 1.0."""
        slope_floor = 20 * 0.2 * math.sqrt(0.5)
        width = calibrate_field_width(4.5, slope_floor)
        assert width == 1.0
        assert field_peak_slope(4.5, width) >= 1.25 * slope_floor

    def test_field_width_impossible(self):
        """Test that an unreachable slope floor is reported."""
        with pytest.raises(ValueError, match="No candidate width"):
            calibrate_field_width(0.1, 50.0)

    def test_calibration_recorded(self):
        """Test that the cart preset documents its field calibration."""
        assert "width 1" in preset_cart(False).diagnostics.calibration


class TestPresetRuns:
    """Closed-loop outcomes of the preset scenarios."""

    def test_local_escape(self, example1_runs):
        """Test that the run from z = 2 leaves the local peak at 3."""
        assert np.max(example1_runs[2.0].trace.z) > 3.5

    @pytest.mark.parametrize("z0", [2.0, 4.0, 7.0])
    def test_c_scale_two_diverges(self, z0):
        """Test that c(k) = 2/(k+1) on the uncapped ramp diverges from every start point.

        This is why the Example 1 preset runs with c(k) = 1/(k+1).
        """
        config = preset_example1(z0)
        config = replace(
            config,
            controller=replace(config.controller, ysat=None),
            monitoring=replace(config.monitoring, c_scale=2.0),
        )
        run = run_scenario(config)
        assert run.status == "diverged"
        assert np.max(np.abs(run.trace.z)) > 1e5

    def test_cart_fixed(self, cart_fixed_run):
        """Test that the cart settles within 3 r of full brightness."""
        r = resolve_gains(preset_cart(False)).r
        assert cart_fixed_run.status == "completed"
        assert cart_fixed_run.metrics.oscillation_amplitude <= 3 * r
        assert cart_fixed_run.metrics.first_entry_time is not None

    def test_cart_moving(self, cart_moving_run, cart_fixed_run):
        """Test tracking of the ramped source within 1.5x the fixed-source band, and the dark interval."""
        trace = cart_moving_run.trace
        fixed_band = cart_fixed_run.metrics.oscillation_amplitude
        motion = trace.between(15.0, 30.0)
        assert np.max(np.abs(trace.y[motion] - 5.0)) <= 1.5 * fixed_band
        assert np.max(np.abs(trace.z[motion] - trace.src[motion])) <= 0.5
        assert np.max(np.abs(trace.z[trace.between(0.0, 4.0)])) <= 0.25
        assert trace.src[-1] == pytest.approx(3.0)


class TestMetrics:
    """Tests for compute_metrics."""

    def test_pure(self, example1_runs):
        """Test that metrics are a function of the trace alone."""
        run = example1_runs[4.0]
        assert compute_metrics(run.trace, preset_example1(4.0)) == run.metrics

    def test_constant_at_peak(self):
        """Test zero oscillation for a trace resting on the maximizer."""
        config = preset_example1()
        loop = ClosedLoop(config)
        z_star, y_star = loop.diagnostics.z_star, loop.diagnostics.y_star
        trace = make_trace(n=101, h=0.01, z=np.full(101, z_star), y=np.full(101, y_star))
        metrics = compute_metrics(trace, config, loop)
        assert metrics.oscillation_amplitude == 0.0
        assert metrics.first_entry_time == 0.0
        assert metrics.switch_count == 0

    def test_absent_entry(self):
        """Test that a run that never reaches the vicinity reports no entry time."""
        run = run_scenario(frozen_direction(7.0, 1, ym0=2.0))
        assert run.metrics.first_entry_time is None


class TestArtifacts:
    """Tests for trace.csv and metadata.json."""

    def test_csv_layout(self, example1_runs, tmp_path):
        """Test the header line and one row per sample."""
        trace = example1_runs[4.0].trace
        lines = emit_csv(trace, tmp_path / "trace.csv").read_text().splitlines()
        assert lines[0] == "t,z,y,y_m,e,phi_m,u,v,rho,k,sigma,eta_bar,src"
        assert len(lines) == len(trace) + 1
        assert lines[1].split(",")[CSV_COLUMNS.index("v")] == ""

    def test_csv_reads_back(self, cart_moving_run, tmp_path):
        """Test that reading the CSV restores every recorded column exactly."""
        trace = cart_moving_run.trace
        loaded = read_csv(emit_csv(trace, tmp_path / "trace.csv"))
        for name in CSV_COLUMNS:
            np.testing.assert_array_equal(getattr(loaded, name), getattr(trace, name))

    def test_bad_header(self, tmp_path):
        """Test that a foreign CSV is refused."""
        path = tmp_path / "other.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="header"):
            read_csv(path)

    def test_byte_identical(self, tmp_path):
        """Test that rerunning a scenario reproduces trace.csv byte for byte."""
        first = run_scenario(preset_example1(7.0), tmp_path / "a")
        second = run_scenario(preset_example1(7.0), tmp_path / "b")
        assert first.csv_path.read_bytes() == second.csv_path.read_bytes()

    def test_metadata(self, tmp_path):
        """Test the metadata record of a cart run."""
        run = run_scenario(preset_cart(False), tmp_path)
        meta = json.loads(run.metadata_path.read_text())
        assert meta["status"] == "completed"
        assert meta["samples"] == len(run.trace)
        assert meta["scenario"]["name"] == "cart-fixed"
        assert meta["map"]["y_star"] == pytest.approx(5.0)
        assert meta["effective_gains"]["km"] == pytest.approx(1.0)
        assert "width" in meta["calibration"]
        assert len(meta["csv_sha256"]) == 64
