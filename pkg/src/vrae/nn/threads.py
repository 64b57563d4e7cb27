"""Process-wide BLAS thread count.

Results are bit-stable for a fixed thread count; callers record the count
next to any timing they report.
"""

from __future__ import annotations

import os

from threadpoolctl import threadpool_info, threadpool_limits

_limiter = None
_threads: int | None = None


def set_threads(n: int | None = None) -> int:
    """Pin BLAS threads to ``n`` (falls back to ``$VRAE_THREADS``, then 1)."""
    global _limiter, _threads
    if n is None:
        n = int(os.environ.get("VRAE_THREADS", "1"))
    if n < 1:
        raise ValueError(f"thread count must be >= 1, got {n}")
    _limiter = threadpool_limits(limits=n)
    _threads = n
    return n


def get_threads() -> int:
    if _threads is not None:
        return _threads
    counts = [info.get("num_threads", 1) for info in threadpool_info()]
    return max(counts, default=1)
