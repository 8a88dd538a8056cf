from __future__ import annotations

import os


def worker_count(requested: int | None = None) -> int:
    """Worker bound: explicit request, else ``QLINK_WORKERS``, else the processor count."""
    if requested is not None:
        if requested < 1:
            raise ValueError("workers must be >= 1")
        return requested
    env = os.environ.get("QLINK_WORKERS")
    if env:
        n = int(env)
        if n < 1:
            raise ValueError("QLINK_WORKERS must be >= 1")
        return n
    return os.cpu_count() or 1
