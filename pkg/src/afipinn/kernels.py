"""Kernel backend selection.

The compiled extension is used when it was built; setting the environment
variable ``AFIPINN_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

from . import _kernels_py

if os.environ.get("AFIPINN_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = "cython" if _impl is not _kernels_py else "python"

jet_tanh_forward = _impl.jet_tanh_forward
jet_tanh_backward = _impl.jet_tanh_backward

__all__ = ["BACKEND", "jet_tanh_forward", "jet_tanh_backward"]
