# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-scenario kernels; see ``_kernels_py`` for the reference twin."""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()

BACKEND = "cython"


cdef inline Py_ssize_t _first_at_least(const double[:] keys, Py_ssize_t a,
                                       Py_ssize_t b, double level, bint strict) noexcept nogil:
    # keys[a:b] is nondecreasing; returns b when no key qualifies
    cdef Py_ssize_t lo = a, hi = b, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if (keys[mid] > level) if strict else (keys[mid] >= level):
            hi = mid
        else:
            lo = mid + 1
    return lo


def crossing_times(const cnp.int64_t[:] offsets, const double[:] breakpoints,
                   const double[:] keys, const double[:] horizons,
                   double level, bint strict):
    cdef Py_ssize_t n = offsets.shape[0] - 1
    out = np.empty(n, dtype=np.float64)
    cdef double[:] o = out
    cdef Py_ssize_t i, j
    cdef double t
    with nogil:
        for i in range(n):
            j = _first_at_least(keys, offsets[i], offsets[i + 1], level, strict)
            t = breakpoints[j] if j < offsets[i + 1] else INFINITY
            o[i] = t if t < horizons[i] else horizons[i]
    return out


def cumulative_integrals(const cnp.int64_t[:] offsets, const double[:] breakpoints,
                         const double[:] values):
    cdef Py_ssize_t n = offsets.shape[0] - 1
    out = np.zeros(breakpoints.shape[0], dtype=np.float64)
    cdef double[:] cum = out
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(n):
            for j in range(offsets[i] + 1, offsets[i + 1]):
                cum[j] = cum[j - 1] + values[j - 1] * (breakpoints[j] - breakpoints[j - 1])
    return out


def integrate_at(const cnp.int64_t[:] offsets, const double[:] breakpoints,
                 const double[:] values, const double[:] cum, index, times):
    cdef const cnp.int64_t[:] idx = np.ascontiguousarray(index, dtype=np.int64)
    cdef const double[:] ts = np.ascontiguousarray(times, dtype=np.float64)
    cdef Py_ssize_t m = ts.shape[0]
    out = np.empty(m, dtype=np.float64)
    cdef double[:] o = out
    cdef Py_ssize_t k, s, a, b, lo, hi, mid
    cdef double t
    with nogil:
        for k in range(m):
            s = idx[k]
            t = ts[k]
            a = offsets[s]
            b = offsets[s + 1]
            # last breakpoint <= t
            lo = a
            hi = b
            while lo < hi:
                mid = (lo + hi) >> 1
                if breakpoints[mid] <= t:
                    lo = mid + 1
                else:
                    hi = mid
            lo -= 1
            o[k] = cum[lo] + values[lo] * (t - breakpoints[lo])
    return out
