"""Ordered thread-pool map controlled by the SETATTRACT_THREADS variable."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "SETATTRACT_THREADS"


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def ordered_map(func: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """map() whose results keep input order regardless of the thread count."""
    items = list(items)
    n = thread_count()
    if n == 1 or len(items) < 2:
        return [func(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(func, items))
