"""Selects the compiled kernels when importable, else the numpy fallback.

Set ``BORNVI_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

if os.environ.get("BORNVI_PURE_PYTHON"):
    kernels = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels
        BACKEND = "cython"
    except ImportError:
        kernels = _kernels_py
        BACKEND = "python"

apply_1q = kernels.apply_1q
apply_cz = kernels.apply_cz
stein_gram = kernels.stein_gram

__all__ = ["BACKEND", "apply_1q", "apply_cz", "stein_gram"]
