"""Assembly kernels: compiled Cython core with a numpy fallback.

The compiled module is used when it was built at install time.  Setting the
environment variable ``MLMC_OCP_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"

if os.environ.get("MLMC_OCP_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
else:
    _impl = _pykernels

scatter_add = _impl.scatter_add
clamped_control_terms = _impl.clamped_control_terms

__all__ = ["BACKEND", "scatter_add", "clamped_control_terms", "_pykernels"]
