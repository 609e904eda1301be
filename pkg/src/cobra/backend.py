"""Kernel backend selection.

The hot numeric kernels (tree growth, tree/GNB scoring, network training)
have two interchangeable implementations:

* ``numba`` -- scalar loops compiled with ``numba.njit`` (fast path),
* ``numpy`` -- vectorized pure-numpy fallback (no compilation, portable).

The active backend is chosen once at import time from the environment
variable ``COBRA_BACKEND`` (``auto`` | ``numba`` | ``numpy``, default
``auto``: numba when importable, numpy otherwise). ``benchmarks/`` times
the two implementations against each other on the same workloads.
"""

from __future__ import annotations

import os

ENV_VAR = "COBRA_BACKEND"
_CHOICES = ("auto", "numba", "numpy")


def numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def load_kernels(name: str):
    """Import and return the kernel module for an explicit backend name."""
    if name == "numpy":
        from . import _kernels_numpy

        return _kernels_numpy
    if name == "numba":
        from . import _kernels_numba

        return _kernels_numba
    raise ValueError(f"unknown backend {name!r}, expected 'numba' or 'numpy'")


def _select() -> tuple[str, object]:
    requested = os.environ.get(ENV_VAR, "auto").strip().lower() or "auto"
    if requested not in _CHOICES:
        raise ValueError(
            f"{ENV_VAR}={requested!r} is not valid; choose one of {_CHOICES}"
        )
    if requested == "numpy":
        return "numpy", load_kernels("numpy")
    if requested == "numba":
        return "numba", load_kernels("numba")
    if numba_available():
        return "numba", load_kernels("numba")
    return "numpy", load_kernels("numpy")


_BACKEND_NAME, kernels = _select()


def backend_name() -> str:
    """Name of the backend selected at import time."""
    return _BACKEND_NAME
