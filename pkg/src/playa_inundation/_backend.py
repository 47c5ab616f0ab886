"""Backend selection for the hot kernels.

Set ``PLAYA_BACKEND=numpy`` to force the pure-numpy path. The default is
``numba`` when numba imports cleanly, otherwise numpy.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

ENV_VAR = "PLAYA_BACKEND"
BACKENDS = ("numba", "numpy")

NUMBA_AVAILABLE = numba is not None


def requested_backend() -> str:
    name = os.environ.get(ENV_VAR, "numba").strip().lower()
    if name not in BACKENDS:
        raise ValueError(f"{ENV_VAR} must be one of {BACKENDS}, got {name!r}")
    if name == "numba" and not NUMBA_AVAILABLE:
        return "numpy"
    return name


def njit(fn):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise."""
    if numba is None:
        return fn
    return numba.njit(cache=True)(fn)
