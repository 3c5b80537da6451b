"""Pure numpy implementation of the CAP-area kernels.

Same contract as the compiled ``_kernels`` extension; used when the
extension is not built.
"""
import numpy as np


def _cumulative_area(cy, cw):
    ycum = np.cumsum(cy)
    before = ycum - cy
    s = float(np.sum(cw * (before + 0.5 * cy)))
    return s / (float(np.sum(cw)) * float(ycum[-1]))


def cap_area(y, w, order, counts=None):
    if counts is None:
        return _cumulative_area(y[order], w[order])
    c = counts[order].astype(np.float64)
    return _cumulative_area(c * y[order], c * w[order])


def cap_areas(y, w, orders, counts):
    return np.array([cap_area(y, w, o, counts) for o in orders], dtype=np.float64)


def ordered_areas(ys, ws, orders, counts):
    c = counts[orders].astype(np.float64)
    return np.array([_cumulative_area(cr * yr, cr * wr) for cr, yr, wr in zip(c, ys, ws)],
                    dtype=np.float64)


def cap_points(y, w, order):
    xs = np.concatenate(([0.0], np.cumsum(w[order])))
    cs = np.concatenate(([0.0], np.cumsum(y[order])))
    return xs, cs
