"""Shared fixtures: preset runs are expensive, so each is simulated once per session."""

from pathlib import Path

import numpy as np
import pytest

from extremum_seeker.scenarios import preset_cart, preset_example1, run_scenario
from extremum_seeker.simulation import SimTrace

FIXTURES_DIR = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def example1_runs():
    """Completed Example 1 runs keyed by z(0)."""
    return {z0: run_scenario(preset_example1(z0)) for z0 in (2.0, 4.0, 7.0)}


@pytest.fixture(scope="session")
def cart_fixed_run():
    return run_scenario(preset_cart(False))


@pytest.fixture(scope="session")
def cart_moving_run():
    return run_scenario(preset_cart(True))


def make_trace(n: int = 11, h: float = 0.1, **columns) -> SimTrace:
    """Synthetic trace; unspecified required columns are zero."""
    base = {
        name: np.zeros(n)
        for name in ("z", "y", "y_m", "e", "phi_m", "u", "rho", "eta_bar")
    }
    base["t"] = np.arange(n) * h
    base["k"] = np.zeros(n, dtype=int)
    base["sigma"] = np.ones(n, dtype=int)
    base.update(columns)
    return SimTrace.from_columns(base)
