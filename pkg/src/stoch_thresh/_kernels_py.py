"""Pure numpy implementations of the per-scenario kernels.

Every routine here has a twin in ``_kernels.pyx`` and must return
bit-identical results: only comparisons, ``min`` and the fixed expression
``cum[j] + v[j] * (t - bp[j])`` touch floating point values.
"""
import numpy as np

BACKEND = "python"


def _segment_starts(offsets):
    return offsets[:-1]


def _lengths(offsets):
    return np.diff(offsets)


def crossing_times(offsets, breakpoints, keys, horizons, level, strict):
    """First breakpoint whose key meets ``level`` (``>`` if strict), capped at the horizon."""
    hit = keys > level if strict else keys >= level
    cand = np.where(hit, breakpoints, np.inf)
    first = np.minimum.reduceat(cand, _segment_starts(offsets))
    return np.minimum(first, horizons)


def cumulative_integrals(offsets, breakpoints, values):
    """Integral of each step process from 0 up to each of its breakpoints."""
    cum = np.zeros(breakpoints.shape[0], dtype=np.float64)
    starts = _segment_starts(offsets)
    lens = _lengths(offsets)
    maxlen = int(lens.max()) if lens.size else 0
    for p in range(1, maxlen):
        sel = starts[lens > p] + p
        cum[sel] = cum[sel - 1] + values[sel - 1] * (breakpoints[sel] - breakpoints[sel - 1])
    return cum


def integrate_at(offsets, breakpoints, values, cum, index, times):
    """Evaluate phi of scenario ``index[k]`` at ``times[k]`` for every k."""
    index = np.asarray(index, dtype=np.int64)
    times = np.asarray(times, dtype=np.float64)
    out = np.empty(times.shape[0], dtype=np.float64)
    if times.shape[0] == 0:
        return out
    starts = offsets[:-1][index]
    lens = (offsets[1:] - offsets[:-1])[index]
    maxlen = int(lens.max())
    if maxlen <= 64:
        count = np.zeros(times.shape[0], dtype=np.int64)
        for p in range(maxlen):
            ok = p < lens
            pos = np.where(ok, starts + p, 0)
            count += ok & (breakpoints[pos] <= times)
        j = starts + count - 1
    else:
        j = np.empty(times.shape[0], dtype=np.int64)
        for s in np.unique(index):
            sel = index == s
            a, b = offsets[s], offsets[s + 1]
            j[sel] = a + np.searchsorted(breakpoints[a:b], times[sel], side="right") - 1
    out[:] = cum[j] + values[j] * (times - breakpoints[j])
    return out
