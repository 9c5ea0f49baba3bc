"""Kernel backend selection, resolved once at import.

The compiled extension is preferred; the pure-Python module is used when
the extension is missing or when GIBSCORE_PURE is set (useful for
benchmarking and for checking that both backends agree).
"""

import os

if os.environ.get("GIBSCORE_PURE"):
    from . import _kernels_py as _impl

    KERNEL_BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        KERNEL_BACKEND = "cython"
    except ImportError:
        from . import _kernels_py as _impl

        KERNEL_BACKEND = "python"

assign_frames = _impl.assign_frames
edit_ops = _impl.edit_ops
