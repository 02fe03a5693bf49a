"""Kernel dispatch.

The compiled extension is used when it imports; otherwise the pure-Python
module takes over. Set ``KOOPFLOW_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pykernels

if os.environ.get("KOOPFLOW_PURE_PYTHON"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND = "python" if _impl is _pykernels else "cython"

dtw_accumulate = _impl.dtw_accumulate
antidiagonal_mean = _impl.antidiagonal_mean
