"""Kernel backend selection.

The hot stepping loops ship in two interchangeable implementations: a jitted
one (numba, default) and a vectorized numpy/scipy fallback.  Selection is by
the FMOSIM_KERNELS environment variable ("numba" or "numpy", read at import);
the fallback is also chosen automatically when numba is unavailable.
"""

from __future__ import annotations

import os
import warnings

from .common import DriveParams, KernelModel, pack_model

_ENV_VAR = "FMOSIM_KERNELS"


def _select():
    choice = os.environ.get(_ENV_VAR, "").strip().lower()
    if choice not in ("", "numba", "numpy"):
        raise ValueError(f"{_ENV_VAR} must be 'numba' or 'numpy', got {choice!r}")
    if choice == "numpy":
        from . import numpy_backend
        return numpy_backend
    try:
        from . import numba_backend
        return numba_backend
    except ImportError:
        if choice == "numba":
            raise
        warnings.warn("numba unavailable; falling back to the numpy kernels")
        from . import numpy_backend
        return numpy_backend


_backend = _select()

BACKEND_NAME: str = _backend.NAME


def make_stepper(model: KernelModel):
    """Stepper (rhs / rk4_span) for the selected backend."""
    return _backend.make_stepper(model)


def get_backend(name: str):
    """Explicit backend lookup, used by the equivalence tests and benchmark."""
    if name == "numpy":
        from . import numpy_backend
        return numpy_backend
    if name == "numba":
        from . import numba_backend
        return numba_backend
    raise ValueError(f"unknown kernel backend {name!r}")


__all__ = ["BACKEND_NAME", "DriveParams", "KernelModel", "get_backend",
           "make_stepper", "pack_model"]
