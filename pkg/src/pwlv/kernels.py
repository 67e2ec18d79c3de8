"""Backend selection for the hot kernels.

The compiled extension ``pwlv._kernels`` is used when it imports; otherwise
the pure-Python module is used. Set ``PWLV_PURE_PYTHON=1`` to force the
fallback (useful for benchmarking and for checking that both agree).
"""
import os

from pwlv import _kernels_py

if os.environ.get("PWLV_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from pwlv import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

pivot = _impl.pivot
relu_select = _impl.relu_select
maxd_select = _impl.maxd_select
knapsack_min = _impl.knapsack_min
onehot_select = _impl.onehot_select

__all__ = [
    "BACKEND",
    "pivot",
    "relu_select",
    "maxd_select",
    "knapsack_min",
    "onehot_select",
]
