"""Backend selection for the CAP-area kernels.

The compiled extension is used when it imports; otherwise the numpy
fallback. :func:`use_backend` switches explicitly (tests, benchmarks).
"""
import numpy as np

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    _BACKENDS["compiled"] = _compiled

BACKEND = "compiled" if _compiled is not None else "python"
_impl = _BACKENDS[BACKEND]


def available_backends():
    return sorted(_BACKENDS)


def use_backend(name):
    """Select a backend by name; returns the previously active name."""
    global BACKEND, _impl
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} not available; have {available_backends()}")
    previous, BACKEND, _impl = BACKEND, name, _BACKENDS[name]
    return previous


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _i64(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def cap_area(y, w, order, counts=None):
    return _impl.cap_area(_f64(y), _f64(w), _i64(order), None if counts is None else _i64(counts))


def cap_areas(y, w, orders, counts):
    return _impl.cap_areas(_f64(y), _f64(w), _i64(orders), _i64(counts))


def ordered_areas(ys, ws, orders, counts):
    """Areas for pre-permuted rows ``ys[r] = y[orders[r]]``, ``ws[r] = w[orders[r]]``."""
    return _impl.ordered_areas(_f64(ys), _f64(ws), _i64(orders), _i64(counts))


def cap_points(y, w, order):
    return _impl.cap_points(_f64(y), _f64(w), _i64(order))
