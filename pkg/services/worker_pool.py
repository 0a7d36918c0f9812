"""Ordered fan-out of per-sample work and keyed random streams.

Results are collected by sample index, so the output never depends on
which worker finished first.
"""
import concurrent.futures
import logging
from typing import Callable, List, Sequence, TypeVar

import numpy as np

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

CHUNK_SIZE = 64  # rows per task; fixed so keyed streams do not depend on worker count


def keyed_rng(seed: int, index: int = 0) -> np.random.Generator:
    """Counter-based stream for (seed, index); identical on every platform and worker count."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


def chunk_indices(count: int, chunk_size: int) -> List[np.ndarray]:
    chunk_size = max(1, int(chunk_size))
    return [np.arange(start, min(start + chunk_size, count)) for start in range(0, count, chunk_size)]


class WorkerPool:
    """Maps a function over items with a thread pool when workers > 1."""

    def __init__(self, workers: int = 1):
        self.workers = max(1, int(workers))

    def map(self, func: Callable[[int, T], R], items: Sequence[T]) -> List[R]:
        """func(index, item) for every item, returned in index order."""
        if self.workers == 1 or len(items) <= 1:
            return [func(i, item) for i, item in enumerate(items)]
        results: List[R] = [None] * len(items)  # type: ignore[list-item]
        with concurrent.futures.ThreadPoolExecutor(max_workers=self.workers) as executor:
            futures = {executor.submit(func, i, item): i for i, item in enumerate(items)}
            for future in concurrent.futures.as_completed(futures):
                results[futures[future]] = future.result()
        logger.debug(f"worker pool finished {len(items)} tasks on {self.workers} threads")
        return results

    def map_chunks(self, func: Callable[[int, np.ndarray], np.ndarray], points: np.ndarray, chunk_size: int = CHUNK_SIZE) -> np.ndarray:
        """Apply func(chunk_index, rows) to fixed-size row chunks and concatenate in order.

        Chunk boundaries depend only on chunk_size, so keyed streams drawn per
        chunk give the same numbers for any worker count.
        """
        parts = chunk_indices(len(points), chunk_size)
        outputs = self.map(lambda i, idx: func(i, points[idx]), parts)
        return np.concatenate(outputs, axis=0)
