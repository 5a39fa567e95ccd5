"""Kernel backend selection.

The compiled Cython kernels are preferred; the pure-NumPy fallback is used
when the extension is not built. FIBNET_BACKEND=cython|numpy forces a
choice (cython raising if unavailable). Both backends are bit-identical.
"""
import os

_requested = os.environ.get("FIBNET_BACKEND", "auto")
if _requested not in ("auto", "cython", "numpy"):
    raise RuntimeError(
        f"FIBNET_BACKEND must be auto, cython or numpy, got {_requested!r}")

if _requested == "numpy":
    from . import np_backend as _impl
    BACKEND = "numpy"
else:
    try:
        from . import cy_backend as _impl
        BACKEND = "cython"
    except ImportError:
        if _requested == "cython":
            raise
        from . import np_backend as _impl
        BACKEND = "numpy"

im2col = _impl.im2col
col2im = _impl.col2im
maxpool_forward = _impl.maxpool_forward
maxpool_backward = _impl.maxpool_backward
avgpool_forward = _impl.avgpool_forward
avgpool_backward = _impl.avgpool_backward


def backend_name() -> str:
    """Name of the kernel backend selected at import time."""
    return BACKEND
