"""Process-wide runtime knobs."""

from __future__ import annotations

import os

THREADS_ENV = "NEUROPROBE_THREADS"


def worker_count(requested: int | None = None) -> int:
    """Number of worker threads to use, capped by NEUROPROBE_THREADS.

    Thread count never changes numeric results (work is partitioned over
    samples and each sample's arithmetic is batch-independent), only wall
    time.
    """
    cap = os.environ.get(THREADS_ENV)
    if requested is None:
        requested = min(4, os.cpu_count() or 1)
    if cap is not None:
        try:
            requested = min(requested, max(1, int(cap)))
        except ValueError:
            pass
    return max(1, requested)
