"""Sequential hot loops, JIT-compiled when numba is available.

The greedy constant-dead-time filter cannot be vectorised (each decision
depends on the previous accepted event), so it is the one place the package
needs a compiled kernel to stay fast on multi-million-record streams.  A
pure-Python fallback keeps the package functional without numba.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    _HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(func):
            return func

        if args and callable(args[0]):
            return args[0]
        return wrap


@njit(cache=True)
def _greedy_dead_time_mask(times, dead_ps):
    keep = np.empty(times.size, np.bool_)
    next_free = np.int64(-(2**62))
    for i in range(times.size):
        t = times[i]
        if t >= next_free:
            keep[i] = True
            next_free = t + dead_ps
        else:
            keep[i] = False
    return keep


def greedy_dead_time_mask(times: np.ndarray, dead_ps: int) -> np.ndarray:
    """Boolean mask of events surviving a constant non-paralysable dead time.

    ``times`` must be sorted non-decreasing (int64 picoseconds).  An event is
    kept iff it arrives at or after the previous kept event plus ``dead_ps``.
    """
    times = np.ascontiguousarray(times, dtype=np.int64)
    if times.size == 0:
        return np.zeros(0, dtype=bool)
    return _greedy_dead_time_mask(times, np.int64(dead_ps))


def warm_up() -> None:
    """Trigger JIT compilation ahead of timing-sensitive work."""
    greedy_dead_time_mask(np.array([0, 5, 10], dtype=np.int64), 4)
