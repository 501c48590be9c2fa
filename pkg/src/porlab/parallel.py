"""Order-preserving parallel map.

Worker count comes from the explicit argument, else PORLAB_THREADS, else 1.
Results always come back in input order so reductions stay deterministic.
"""

import os
from concurrent.futures import ThreadPoolExecutor

_default_threads = None


def set_default_threads(n):
    global _default_threads
    _default_threads = None if n is None else max(1, int(n))


def thread_count(threads=None) -> int:
    if threads is not None:
        return max(1, int(threads))
    if _default_threads is not None:
        return _default_threads
    env = os.environ.get("PORLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def pmap(fn, items, threads=None) -> list:
    items = list(items)
    n = thread_count(threads)
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
