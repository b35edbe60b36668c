"""Shared fixtures and independent quadrature oracles.

The oracles recompute the measured quantities through a different route
than the package (dense physical sampling + rectangle/trapezoid quadrature,
finite differences in t) so closed-form expectations can be cross-checked
without trusting the implementation under test.
"""

import numpy as np
import pytest

from cyllab.cylinder import Cylinder, SpectralField

TWO_PI = 2.0 * np.pi


def make_cylinder(r=1.0, s_per_unit=200, t_modes=8, dim=1) -> Cylinder:
    S = int(round(s_per_unit * (2 * r + 2))) + 1
    return Cylinder(half_length=r, s_samples=S, t_modes=t_modes, ambient_dim=dim)


def mode_values(field: SpectralField, s_idx, t: np.ndarray) -> np.ndarray:
    """Direct mode summation at given t samples (no fft), shape (len(t), n)."""
    modes = field.cylinder.modes
    waves = np.exp(1j * TWO_PI * np.outer(t, modes))
    return waves @ field.coeffs[s_idx]


def loop_norm_sq_oracle(field: SpectralField, s_idx, n_t=1024) -> float:
    """Rectangle-rule quadrature of ``int |u(s, .)|^2 dt``."""
    t = np.arange(n_t) / n_t
    vals = mode_values(field, s_idx, t)
    return float(np.sum(np.abs(vals) ** 2) / n_t)


def dt_loop_norm_sq_oracle(field: SpectralField, s_idx, n_t=4096) -> float:
    """Same for the t-derivative, via central finite differences in t."""
    t = np.arange(n_t) / n_t
    vals = mode_values(field, s_idx, t)
    dt = 1.0 / n_t
    dvals = (np.roll(vals, -1, axis=0) - np.roll(vals, 1, axis=0)) / (2 * dt)
    return float(np.sum(np.abs(dvals) ** 2) / n_t)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import CRITERION_LINES
    except ImportError:
        return
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERION_LINES:
            terminalreporter.write_line(line)
