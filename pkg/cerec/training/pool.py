"""
Batched execution of independent column updates.

Within a half-sweep every column update depends only on frozen matrices, so
the columns are grouped into batches of ``batch_size`` and the batches are
submitted to a thread pool. LAPACK releases the GIL, so threads are enough.
"""

import logging
from collections.abc import Callable
from collections.abc import Sequence
from concurrent import futures

import numpy as np

logger = logging.getLogger(__name__)


class ColumnBatch:
    def __init__(self, columns: Sequence[int]):
        self.columns = columns
        self.future: futures.Future | None = None

    def __len__(self):
        return len(self.columns)

    def run(self, solve: Callable[[int], np.ndarray]):
        return self, [solve(col) for col in self.columns]

    def submit(self, executor, solve):
        self.future = executor.submit(self.run, solve)


class BlockPool:
    """Solves one block of columns with ``threads`` workers.

    With a single thread every batch runs inline, which keeps tracebacks and
    profiling simple.
    """

    def __init__(self, threads: int = 1, batch_size: int = 256):
        if threads < 1:
            raise ValueError("threads must be at least 1")
        if batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        self.threads = threads
        self.batch_size = batch_size
        self.executor = (
            futures.ThreadPoolExecutor(
                max_workers=threads, thread_name_prefix="cerec-block"
            )
            if threads > 1
            else None
        )

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_value, exc_traceback):
        self.shutdown()
        return False

    def _batches(self, num_columns: int):
        for start in range(0, num_columns, self.batch_size):
            yield ColumnBatch(range(start, min(start + self.batch_size, num_columns)))

    def solve_columns(
        self, num_columns: int, solve: Callable[[int], np.ndarray], out: np.ndarray
    ):
        """Write ``solve(col)`` into ``out[:, col]`` for every column."""
        if self.executor is None:
            for col in range(num_columns):
                out[:, col] = solve(col)
            return

        batches = list(self._batches(num_columns))
        for batch in batches:
            batch.submit(self.executor, solve)
        logger.debug("Submitted %d batches of %d columns", len(batches), self.batch_size)

        # ``solve`` must not read ``out``.
        for future in futures.as_completed([b.future for b in batches]):
            batch, columns = future.result()
            for col, value in zip(batch.columns, columns):
                out[:, col] = value

    def shutdown(self, wait=True):
        if self.executor is not None:
            self.executor.shutdown(wait)
