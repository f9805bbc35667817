"""Kalman kernel backend selection.

The compiled Cython extension (``railcount._kernels``) is preferred when it
was built; otherwise the NumPy implementation is used. Set the environment
variable ``RAILCOUNT_PURE=1`` before import to force the pure backend (used
by the backend benchmark and the equivalence tests).
"""

from __future__ import annotations

import os

if os.environ.get("RAILCOUNT_PURE", "").strip() in ("1", "true", "yes"):
    from . import _kernels_py as _impl

    BACKEND = "pure"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        from . import _kernels_py as _impl

        BACKEND = "pure"

kf_predict = _impl.kf_predict
kf_update = _impl.kf_update
kf_gating = _impl.kf_gating


def active_backend() -> str:
    """Name of the backend in use: 'compiled' or 'pure'."""
    return BACKEND
