"""Row-block fan-out for cube operations."""
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

from core.config import settings


def map_row_blocks(
    func: Callable[[np.ndarray, int], np.ndarray],
    array: np.ndarray,
    workers: int = None,
) -> np.ndarray:
    """
    Apply `func` to contiguous row blocks and stitch results in row order.

    Args:
        func: Called as func(block, first_row); must return an array whose
            first axis matches the block
        array: Array whose first axis is image rows
        workers: Thread count, defaults to the configured value

    Returns:
        Concatenated result, identical for any worker count
    """
    workers = max(1, workers or settings.workers)
    rows = array.shape[0]
    if workers == 1 or rows <= 1:
        return func(array, 0)

    bounds = np.linspace(0, rows, min(workers, rows) + 1).astype(int)
    blocks = [(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]

    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(func, array[lo:hi], lo) for lo, hi in blocks]
        results = [f.result() for f in futures]

    return np.concatenate(results, axis=0)
