"""Backend agreement between the compiled kernel and the numpy fallback."""

import numpy as np
import pytest

from cyllab import _kernels_py, kernels
from cyllab.solver import _quad_weights

compiled = pytest.importorskip("cyllab._kernels", reason="compiled kernel not built")


def _workload(S=257, M=9, N=2, seed=3):
    rng = np.random.default_rng(seed)
    h = 6.0 / (S - 1)
    a = -2.0 * np.pi * np.arange(M, dtype=float) * h
    E = np.exp(a)
    w = _quad_weights(a, h)
    rhs = rng.standard_normal((S, M, N)) + 1j * rng.standard_normal((S, M, N))
    u0 = rng.standard_normal((M, N)) + 1j * rng.standard_normal((M, N))
    return E, w, np.ascontiguousarray(rhs), np.ascontiguousarray(u0)


def test_first_order_backends_agree():
    E, w, rhs, u0 = _workload()
    for sign in (1.0, -1.0):
        out_c = compiled.propagate_first_order(
            E, w["first"], w["interior"], w["last"], rhs, u0, sign)
        out_py = _kernels_py.propagate_first_order(
            E, w["first"], w["interior"], w["last"], rhs, u0, sign)
        assert np.array_equal(out_c, out_py)


def test_homogeneous_backends_agree():
    E, _, _, u0 = _workload()
    out_c = compiled.propagate_homogeneous(E, 257, u0)
    out_py = _kernels_py.propagate_homogeneous(E, 257, u0)
    assert np.array_equal(out_c, out_py)


def test_homogeneous_is_first_order_with_zero_rhs():
    E, w, rhs, u0 = _workload()
    out_h = kernels.propagate_homogeneous(E, rhs.shape[0], u0)
    out_f = kernels.propagate_first_order(
        E, w["first"], w["interior"], w["last"], np.zeros_like(rhs), u0, 1.0)
    assert np.max(np.abs(out_h - out_f)) == 0.0
