"""Ordered parallel map with a worker count taken from the environment."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
U = TypeVar("U")

ENV_WORKERS = "EBINCURV_WORKERS"


def worker_count() -> int:
    raw = os.environ.get(ENV_WORKERS, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"{ENV_WORKERS} must be an integer, got {raw!r}") from None


def ordered_map(fn: Callable[[T], U], items: Iterable[T], workers: int | None = None) -> list[U]:
    """``[fn(x) for x in items]``, possibly threaded; output order never depends on scheduling."""
    items = list(items)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
