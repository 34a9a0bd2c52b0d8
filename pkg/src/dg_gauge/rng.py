"""Deterministic random streams.

Every stream is a Philox generator keyed by ``(seed, *labels)``. Philox is
counter based, so a stream depends only on its key and never on which thread
or in which order it is consumed.
"""

from __future__ import annotations

import os
import zlib

import numpy as np

from .errors import InvalidInput

#: trials are drawn in fixed-size blocks; block ``j`` has its own stream
BLOCK_SIZE = 1 << 16

THREADS_ENV = "DG_GAUGE_THREADS"


def _label(x) -> int:
    if isinstance(x, (bool, np.bool_)):
        return int(x)
    if isinstance(x, (int, np.integer)):
        if x < 0:
            raise InvalidInput(f"stream labels must be non-negative, got {x}")
        return int(x)
    return zlib.crc32(str(x).encode("utf-8"))


def stream(seed: int, *labels) -> np.random.Generator:
    """Return the generator for ``seed`` and an arbitrary tuple of labels."""
    if seed < 0:
        raise InvalidInput(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_label(x) for x in labels))
    return np.random.Generator(np.random.Philox(ss))


def thread_count(default: int | None = None) -> int:
    """Worker count from ``DG_GAUGE_THREADS``; falls back to ``min(8, cpu_count)``."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return default if default is not None else max(1, min(8, os.cpu_count() or 1))
    try:
        n = int(raw)
    except ValueError:
        raise InvalidInput(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise InvalidInput(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def blocks(total: int, size: int = BLOCK_SIZE):
    """Yield ``(block_index, n)`` pairs covering ``total`` items."""
    j = 0
    start = 0
    while start < total:
        n = min(size, total - start)
        yield j, n
        start += n
        j += 1
