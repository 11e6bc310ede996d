"""Process-level execution settings."""
from __future__ import annotations

import contextlib

from threadpoolctl import threadpool_limits


@contextlib.contextmanager
def deterministic_mode(enabled: bool = True):
    """Pin BLAS/OpenMP pools to one thread so matmul reductions run in a fixed order."""
    if not enabled:
        yield
        return
    with threadpool_limits(limits=1):
        yield
