# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled CAP-area kernels.

The caller fixes an ordering of the observations once; a bootstrap
replicate is then described by a multiplicity vector over the original
observations, so each area is a single pass with no sorting.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef double _area(const double[::1] y, const double[::1] w,
                  const cnp.int64_t[::1] order, const cnp.int64_t[::1] counts,
                  bint weighted) noexcept nogil:
    cdef Py_ssize_t k, i
    cdef double c, cy, cw
    cdef double ycum = 0.0, wsum = 0.0, s = 0.0
    for k in range(order.shape[0]):
        i = order[k]
        if weighted:
            c = <double>counts[i]
            if c == 0.0:
                continue
            cy = c * y[i]
            cw = c * w[i]
        else:
            cy = y[i]
            cw = w[i]
        s += cw * (ycum + 0.5 * cy)
        ycum += cy
        wsum += cw
    return s / (wsum * ycum)


def cap_area(const double[::1] y, const double[::1] w, const cnp.int64_t[::1] order,
             counts=None):
    """Area under the piecewise-linear CAP for observations visited in ``order``.

    ``counts`` gives the multiplicity of each original observation (a
    bootstrap resample); ``None`` means every observation once.
    """
    cdef const cnp.int64_t[::1] c
    cdef double out
    if counts is None:
        c = order
        with nogil:
            out = _area(y, w, order, c, False)
    else:
        c = counts
        with nogil:
            out = _area(y, w, order, c, True)
    return out


def cap_areas(const double[::1] y, const double[::1] w, const cnp.int64_t[:, ::1] orders,
              const cnp.int64_t[::1] counts):
    """One area per row of ``orders`` for the resample given by ``counts``."""
    cdef Py_ssize_t m = orders.shape[0], r
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] res = out
    with nogil:
        for r in range(m):
            res[r] = _area(y, w, orders[r], counts, True)
    return out


def ordered_areas(const double[:, ::1] ys, const double[:, ::1] ws,
                  const cnp.int64_t[:, ::1] orders, const cnp.int64_t[::1] counts):
    """Like :func:`cap_areas` with ``ys[r] = y[orders[r]]`` and ``ws[r] = w[orders[r]]``.

    Pre-permuted rows leave a single gather per step (the multiplicity),
    and the loop carries no branch.
    """
    cdef Py_ssize_t m = orders.shape[0], n = orders.shape[1], r, k
    cdef double c, cy, cw, ycum, wsum, s
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] res = out
    with nogil:
        for r in range(m):
            ycum = 0.0
            wsum = 0.0
            s = 0.0
            for k in range(n):
                c = <double>counts[orders[r, k]]
                cy = c * ys[r, k]
                cw = c * ws[r, k]
                s += cw * (ycum + 0.5 * cy)
                ycum += cy
                wsum += cw
            res[r] = s / (wsum * ycum)
    return out


def cap_points(const double[::1] y, const double[::1] w, const cnp.int64_t[::1] order):
    """Cumulative (weight, response) sums along ``order``, prefixed with zero."""
    cdef Py_ssize_t n = order.shape[0], k, i
    xs = np.empty(n + 1, dtype=np.float64)
    cs = np.empty(n + 1, dtype=np.float64)
    cdef double[::1] xv = xs, cv = cs
    cdef double wsum = 0.0, ycum = 0.0
    with nogil:
        xv[0] = 0.0
        cv[0] = 0.0
        for k in range(n):
            i = order[k]
            wsum += w[i]
            ycum += y[i]
            xv[k + 1] = wsum
            cv[k + 1] = ycum
    return xs, cs
