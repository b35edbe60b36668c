"""Pure-numpy fallback for the hot propagation kernel.

Same contract as the compiled ``cyllab._kernels`` module; the loop over the
s-axis is sequential by necessity (each sample feeds the next), so this
version pays one Python-level iteration per grid step.
"""

import numpy as np

BACKEND = "python"


def propagate_first_order(E, w_first, w_interior, w_last, rhs, u0, sign):
    """March ``u[j+1] = E*u[j] + sign * (quadrature of rhs over step j)``.

    Parameters
    ----------
    E : (M,) float64
        Per-mode homogeneous step factor ``exp(a)`` with ``a <= 0``.
    w_first, w_interior, w_last : (M, 4) float64
        Quadrature weights applied to the 4-sample window of ``rhs``
        around each step; the first/last steps use shifted windows.
    rhs : (S, M, N) complex128 or None
        Forcing samples; ``None`` means homogeneous propagation.
    u0 : (M, N) complex128
        Values at the starting sample (index 0).
    sign : float
        +1.0 or -1.0, orientation of the inhomogeneous term.

    Returns
    -------
    (S, M, N) complex128
    """
    if rhs is None:
        raise ValueError("rhs is required; use propagate_homogeneous for rhs=None")
    S, M, N = rhs.shape
    out = np.empty((S, M, N), dtype=np.complex128)
    out[0] = u0
    Ecol = E[:, None]
    for j in range(S - 1):
        if j == 0:
            w, base = w_first, 0
        elif j == S - 2:
            w, base = w_last, S - 4
        else:
            w, base = w_interior, j - 1
        quad = (
            w[:, 0:1] * rhs[base]
            + w[:, 1:2] * rhs[base + 1]
            + w[:, 2:3] * rhs[base + 2]
            + w[:, 3:4] * rhs[base + 3]
        )
        out[j + 1] = Ecol * out[j] + sign * quad
    return out


def propagate_homogeneous(E, n_samples, u0):
    """Homogeneous special case: ``u[j] = E**j * u0``, computed stably.

    Repeated multiplication (not powering) keeps per-step relative error at
    one ulp and underflows gracefully for strongly decaying modes.
    """
    M, N = u0.shape
    out = np.empty((n_samples, M, N), dtype=np.complex128)
    out[0] = u0
    Ecol = E[:, None]
    for j in range(n_samples - 1):
        out[j + 1] = Ecol * out[j]
    return out
