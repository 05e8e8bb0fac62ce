"""
Process pool for simulation attempts.

Tasks are pure functions of (context, attempt range) with their own random
streams, so chunks can be computed ahead and out of order; results are always
handed back in attempt order.
"""
import logging
from itertools import islice
from typing import Any, Callable, Iterable, Iterator, Optional

from joblib import Parallel, delayed

logger = logging.getLogger(__name__)

ChunkTask = Callable[[Any, range], list]


class AttemptPool:
    """
    Context-managed pool of joblib workers.

    Chunks are dispatched in waves of ``workers * lookahead``; a consumer that
    stops early wastes at most the rest of the current wave. ``workers = 1``
    runs every chunk inline in the calling process.
    """

    def __init__(self, workers: int = 1, lookahead: int = 4):
        if workers < 1:
            raise ValueError("workers must be at least 1")
        self.workers = workers
        self.lookahead = max(1, lookahead)
        self._parallel: Optional[Parallel] = None

    def __enter__(self) -> "AttemptPool":
        if self.workers > 1:
            logger.info(f"[x] Starting {self.workers} worker processes")
            self._parallel = Parallel(n_jobs=self.workers, backend="loky", return_as="generator")
            self._parallel.__enter__()
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if self._parallel is not None:
            logger.info("[x] Shutting down worker processes")
            self._parallel.__exit__(exc_type, exc, tb)
            self._parallel = None

    def map_chunks(self, task: ChunkTask, context: Any, chunks: Iterable[range]) -> Iterator[list]:
        """Yield ``task(context, chunk)`` for every chunk, in order."""
        if self._parallel is None:
            for chunk in chunks:
                yield task(context, chunk)
            return

        chunk_iter = iter(chunks)
        wave_size = self.workers * self.lookahead
        while wave := list(islice(chunk_iter, wave_size)):
            outputs = self._parallel(delayed(task)(context, chunk) for chunk in wave)
            try:
                yield from outputs
            finally:
                # a Parallel instance runs one call at a time; finish the wave before the next one
                for _ in outputs:
                    pass
