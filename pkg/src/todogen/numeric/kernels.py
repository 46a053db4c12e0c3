"""Kernel backend selection.

The compiled extension is preferred when it imported cleanly; otherwise the
pure-numpy fallback is used.  Setting ``TODOGEN_PURE_PYTHON=1`` forces the
fallback (useful for benchmarking the two against each other).
"""

import os

from . import _kernels_py

if os.environ.get("TODOGEN_PURE_PYTHON") == "1":
    backend = _kernels_py
else:
    try:
        from . import _kernels_c as backend  # type: ignore[no-redef]
    except ImportError:
        backend = _kernels_py


def backend_name() -> str:
    """Name of the active kernel backend: "cython" or "python"."""
    return backend.BACKEND
