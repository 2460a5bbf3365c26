"""Selects the Schur kernel implementation at import time.

The compiled Cython kernel is preferred; the NumPy fallback is used when the
extension is unavailable or when STRAINRELAX_PURE is set in the environment.
"""

import os

from . import _schur_py


def _load():
    if os.environ.get("STRAINRELAX_PURE"):
        return _schur_py
    try:
        from . import _schur  # compiled extension
        return _schur
    except ImportError:
        return _schur_py


kernel = _load()
BACKEND = kernel.BACKEND
