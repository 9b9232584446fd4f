"""Counter-keyed random streams.

Every stochastic routine in the package draws from a Philox generator keyed
by (seed, stream index).  A path or particle block owns its stream index, so
results depend only on (seed, index), never on how work is split across
workers.  This is what makes every estimate bitwise reproducible for any
thread count.
"""

import numpy as np

_MASK64 = (1 << 64) - 1


def stream(seed, index=0):
    """Independent Generator for the given (seed, stream index) pair."""
    key = np.array([int(seed) & _MASK64, int(index) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def chunk_ranges(n, chunk_size):
    """Fixed [lo, hi) work ranges, independent of the worker count."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if chunk_size <= 0:
        raise ValueError("chunk_size must be positive")
    return [(lo, min(lo + chunk_size, n)) for lo in range(0, n, chunk_size)]


def run_chunked(task, n, chunk_size, n_workers=1):
    """Apply ``task(lo, hi, chunk_index)`` over fixed chunks, merge in order.

    Returns the list of chunk results ordered by chunk index regardless of
    the number of workers.  Workers only overlap independent streams, so the
    merged result is identical for every ``n_workers``.
    """
    ranges = chunk_ranges(n, chunk_size)
    if n_workers <= 1 or len(ranges) <= 1:
        return [task(lo, hi, i) for i, (lo, hi) in enumerate(ranges)]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        futures = [pool.submit(task, lo, hi, i) for i, (lo, hi) in enumerate(ranges)]
        return [f.result() for f in futures]
