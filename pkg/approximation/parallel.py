"""
Chunked worker pool

Work is split into fixed-size chunks whose size does not depend on the worker count.
Chunks run on a thread pool and their results come back in chunk order, so any
reduction the caller performs over them is the same for every CAPA_THREADS value.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, TypeVar

from engine.errors import ConfigurationError

logger = logging.getLogger(__name__)

ENV_THREADS = "CAPA_THREADS"

T = TypeVar("T")
R = TypeVar("R")


def worker_count() -> int:
    """Worker cap from CAPA_THREADS, else the CPU count; at least 1"""
    raw = os.environ.get(ENV_THREADS)
    if raw is None or raw.strip() == "":
        return max(os.cpu_count() or 1, 1)
    try:
        value = int(raw)
    except ValueError:
        raise ConfigurationError(f"{ENV_THREADS} must be an integer, got {raw!r}") from None
    return max(value, 1)


def chunked(items: Sequence[T], chunk_size: int) -> List[Sequence[T]]:
    if chunk_size < 1:
        raise ConfigurationError(f"chunk_size must be >= 1, got {chunk_size}")
    return [items[start:start + chunk_size] for start in range(0, len(items), chunk_size)]


def chunked_map(
    fn: Callable[[Sequence[T]], R],
    items: Sequence[T],
    chunk_size: int,
    max_workers: Optional[int] = None,
) -> List[R]:
    """
    Apply fn to every chunk of items

    Returns:
        One result per chunk, in chunk order
    """
    chunks = chunked(items, chunk_size)
    if not chunks:
        return []
    workers = min(max_workers or worker_count(), len(chunks))
    logger.debug("[Parallel] %d chunks of <= %d items on %d workers",
                 len(chunks), chunk_size, workers)
    if workers == 1:
        return [fn(chunk) for chunk in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))
