"""Kernel backend selection.

Imports the compiled extension when available, otherwise the numpy fallback.
Set ``CYLLAB_FORCE_PYTHON=1`` to force the fallback (useful for benchmarking
and for debugging the compiled path against the reference implementation).
"""

import os

if os.environ.get("CYLLAB_FORCE_PYTHON", "") not in ("", "0"):
    from cyllab import _kernels_py as _impl
else:
    try:
        from cyllab import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        from cyllab import _kernels_py as _impl

BACKEND = _impl.BACKEND
propagate_first_order = _impl.propagate_first_order
propagate_homogeneous = _impl.propagate_homogeneous
