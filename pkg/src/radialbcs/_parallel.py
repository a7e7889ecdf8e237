"""Order-preserving map over independent tasks."""

from concurrent.futures import ThreadPoolExecutor


def ordered_map(func, items, threads=1):
    """``[func(x) for x in items]``, optionally on a thread pool.

    Results come back in input order, so output does not depend on the
    thread count.  LAPACK and the compiled kernels release the GIL, which is
    where the time goes.
    """
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=int(threads)) as pool:
        return list(pool.map(func, items))
