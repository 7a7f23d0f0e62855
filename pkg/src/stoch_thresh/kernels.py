"""Backend selection for the per-scenario kernels.

The compiled extension is used when it was built; otherwise the numpy
fallback is imported.  Setting ``STOCH_THRESH_PURE=1`` forces the fallback.
``STOCH_THRESH_THREADS`` caps the number of worker threads used to split
large scenario sets into chunks (the compiled kernels release the GIL).
"""
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _kernels_py

_compiled = None
if os.environ.get("STOCH_THRESH_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

_impl = _compiled if _compiled is not None else _kernels_py
BACKEND = _impl.BACKEND

# chunks smaller than this are not worth a thread hand-off
_MIN_CHUNK = 1 << 16


def available_backends():
    """Names of importable kernel backends, preferred first."""
    names = [] if _compiled is None else [_compiled.BACKEND]
    return names + [_kernels_py.BACKEND]


def get_backend(name=None):
    """Return the kernel module called ``name`` (default: the active one)."""
    if name is None:
        return _impl
    if name == "python":
        return _kernels_py
    if name == "cython" and _compiled is not None:
        return _compiled
    raise ValueError(f"kernel backend {name!r} is not available")


def worker_count():
    """Worker cap from ``STOCH_THRESH_THREADS`` (default 1)."""
    raw = os.environ.get("STOCH_THRESH_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _chunks(n, workers):
    if workers <= 1 or n < 2 * _MIN_CHUNK:
        return [(0, n)]
    k = min(workers, n // _MIN_CHUNK)
    edges = np.linspace(0, n, k + 1).astype(np.int64)
    return list(zip(edges[:-1], edges[1:]))


def crossing_times(offsets, breakpoints, keys, horizons, level, strict, backend=None):
    impl = get_backend(backend)
    n = offsets.shape[0] - 1
    parts = _chunks(n, worker_count())
    if len(parts) == 1:
        return impl.crossing_times(offsets, breakpoints, keys, horizons, float(level), bool(strict))

    def run(part):
        a, b = part
        lo, hi = offsets[a], offsets[b]
        return impl.crossing_times(offsets[a:b + 1] - lo, breakpoints[lo:hi], keys[lo:hi],
                                   horizons[a:b], float(level), bool(strict))

    with ThreadPoolExecutor(len(parts)) as pool:
        return np.concatenate(list(pool.map(run, parts)))


def cumulative_integrals(offsets, breakpoints, values, backend=None):
    return get_backend(backend).cumulative_integrals(offsets, breakpoints, values)


def integrate_at(offsets, breakpoints, values, cum, index, times, backend=None):
    impl = get_backend(backend)
    index = np.ascontiguousarray(index, dtype=np.int64)
    times = np.ascontiguousarray(times, dtype=np.float64)
    parts = _chunks(times.shape[0], worker_count())
    if len(parts) == 1:
        return impl.integrate_at(offsets, breakpoints, values, cum, index, times)

    def run(part):
        a, b = part
        return impl.integrate_at(offsets, breakpoints, values, cum, index[a:b], times[a:b])

    with ThreadPoolExecutor(len(parts)) as pool:
        return np.concatenate(list(pool.map(run, parts)))
