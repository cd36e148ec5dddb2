"""Thread-capped parallel map; ``BRIDGELAB_THREADS`` sets the worker count."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def max_threads() -> int:
    try:
        n = int(os.environ.get("BRIDGELAB_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def pmap(fn: Callable[[T], R], items: Sequence[T]) -> List[R]:
    """Order-preserving map; serial unless more than one thread is allowed."""
    n = min(max_threads(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))
