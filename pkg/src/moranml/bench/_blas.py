"""Process-wide single-threaded BLAS, safe to enter from several threads at once."""

from __future__ import annotations

import threading
from contextlib import contextmanager

from threadpoolctl import threadpool_limits

_lock = threading.Lock()
_depth = 0
_limiter = None


@contextmanager
def single_threaded_blas():
    """Pin BLAS/OpenMP pools to one thread until the outermost holder exits.

    Reduction order inside multithreaded BLAS can depend on the thread count,
    so every scenario runs under this pin to keep its outputs byte-identical.
    """
    global _depth, _limiter
    with _lock:
        if _depth == 0:
            _limiter = threadpool_limits(limits=1)
        _depth += 1
    try:
        yield
    finally:
        with _lock:
            _depth -= 1
            if _depth == 0:
                _limiter.restore_original_limits()
                _limiter = None
