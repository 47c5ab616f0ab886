"""Hot kernels with two interchangeable implementations.

The active implementation is picked from ``PLAYA_BACKEND`` at import time and
can be swapped at runtime with :func:`use_backend` (benchmarks, tests).
"""

import contextlib
import types

from .._backend import NUMBA_AVAILABLE, requested_backend
from . import _numpy as numpy_impl

if NUMBA_AVAILABLE:
    from . import _numba as numba_impl
else:  # pragma: no cover
    numba_impl = None

_IMPLS = {"numpy": numpy_impl, "numba": numba_impl}
_active: types.ModuleType = _IMPLS[requested_backend()]


def active_backend() -> str:
    return "numba" if _active is numba_impl else "numpy"


def get_impl(name: str) -> types.ModuleType:
    impl = _IMPLS.get(name)
    if impl is None:
        raise ValueError(f"backend {name!r} is not available")
    return impl


@contextlib.contextmanager
def use_backend(name: str):
    global _active
    previous = _active
    _active = get_impl(name)
    try:
        yield
    finally:
        _active = previous


def lstm_forward(xproj, w_hh):
    return _active.lstm_forward(xproj, w_hh)


def lstm_backward(dh_out, gates, c, tanh_c, w_hh):
    return _active.lstm_backward(dh_out, gates, c, tanh_c, w_hh)


def lookup_cells(xs, ys, origin_x, origin_y, cell_size, values, outside):
    return _active.lookup_cells(xs, ys, float(origin_x), float(origin_y), float(cell_size), values, outside)
