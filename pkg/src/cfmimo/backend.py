"""Selection of the Monte-Carlo kernel backend.

Two implementations of the realization kernels exist: a numba ``@njit``
path and a pure-numpy vectorized path.  The default is chosen by the
``CFMIMO_BACKEND`` environment variable (``numba`` or ``numpy``); when the
variable is unset, numba is used if it imports, numpy otherwise.  Both
backends consume identical random-number streams and agree to floating
point accumulation order.
"""

import os

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

ENV_VAR = "CFMIMO_BACKEND"


def default_backend():
    forced = os.environ.get(ENV_VAR, "").strip().lower()
    if forced:
        if forced not in ("numpy", "numba"):
            raise ValueError(f"{ENV_VAR} must be 'numpy' or 'numba', got {forced!r}")
        if forced == "numba" and not HAVE_NUMBA:
            raise RuntimeError(f"{ENV_VAR}=numba but numba is not importable")
        return forced
    return "numba" if HAVE_NUMBA else "numpy"


def resolve(backend=None):
    """Normalize a backend argument (None means the environment default)."""
    if backend is None:
        return default_backend()
    if backend not in ("numpy", "numba"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    return backend
