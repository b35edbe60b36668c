"""Field serialization roundtrips."""

import json

import numpy as np
import pytest

from cyllab.cylinder import SpectralField
from cyllab.fieldio import load_field, save_field
from conftest import make_cylinder


@pytest.mark.parametrize("fmt", ["npy", "csv"])
def test_roundtrip(tmp_path, rng, fmt):
    cyl = make_cylinder(r=1.0, s_per_unit=10, t_modes=8, dim=2)
    coeffs = rng.standard_normal((cyl.s_samples, 8, 2)) \
        + 1j * rng.standard_normal((cyl.s_samples, 8, 2))
    u = SpectralField(cyl, coeffs, ball_constrained=True)
    header = save_field(u, tmp_path / "field", fmt=fmt)
    back = load_field(header)
    assert back.cylinder == cyl
    assert back.ball_constrained
    tol = 0.0 if fmt == "npy" else 1e-12
    assert np.max(np.abs(back.coeffs - u.coeffs)) <= tol


def test_header_contents(tmp_path):
    cyl = make_cylinder(r=2.0, s_per_unit=10, t_modes=4)
    header_path = save_field(SpectralField.zero(cyl), tmp_path / "f")
    header = json.loads(header_path.read_text())
    assert header["columns"] == ["s_index", "mode_k", "component", "re", "im"]
    assert header["half_length"] == 2.0
    assert header["s_samples"] == cyl.s_samples
    assert (tmp_path / header["data_file"]).exists()
