"""Kernel selection: the compiled extension when importable, numpy otherwise.

Set ``LINDSTEDT_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
cubic_convolve = _kernels_py.cubic_convolve

if os.environ.get("LINDSTEDT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        cubic_convolve = _compiled.cubic_convolve
        BACKEND = "cython"
