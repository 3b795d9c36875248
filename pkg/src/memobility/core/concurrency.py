"""決定的なブロック並列実行を行う BlockExecutor."""

from __future__ import annotations

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Sequence, TypeVar

import numpy as np

from memobility.core.random import RandomStreams

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

DEFAULT_BLOCK_SIZE = 128


@dataclass(frozen=True)
class ExecutorMetrics:
    """並列実行のメトリクス."""

    workers: int
    blocks_submitted: int
    blocks_completed: int
    blocks_failed: int


class BlockExecutor:
    """添字を固定サイズのブロックに分割し、ブロックごとの乱数ストリームで処理する.

    分割はワーカー数に依存しないため、結果はスケジューリングに依らず同一になる.
    """

    def __init__(self, workers: int = 1, block_size: int = DEFAULT_BLOCK_SIZE) -> None:
        if workers < 1:
            raise ValueError("workers は 1 以上である必要があります")
        if block_size < 1:
            raise ValueError("block_size は 1 以上である必要があります")
        self._workers = workers
        self._block_size = block_size
        self._lock = threading.Lock()
        self._submitted = 0
        self._completed = 0
        self._failed = 0

    @property
    def workers(self) -> int:
        return self._workers

    def blocks(self, n: int) -> List[np.ndarray]:
        """0..n-1 を固定サイズのブロックに分割する."""
        return [
            np.arange(start, min(start + self._block_size, n))
            for start in range(0, n, self._block_size)
        ]

    def map_blocks(
        self,
        fn: Callable[[np.ndarray, np.random.Generator], R],
        n: int,
        streams: RandomStreams,
        label: str,
    ) -> List[R]:
        """各ブロックに fn(indices, rng) を適用し、ブロック順の結果リストを返す."""
        blocks = self.blocks(n)
        rngs = [streams.stream(label, b) for b in range(len(blocks))]
        return self.map_ordered(lambda pair: fn(*pair), list(zip(blocks, rngs)))

    def map_ordered(self, fn: Callable[[T], R], items: Sequence[T]) -> List[R]:
        """items に fn を適用し、入力順の結果リストを返す."""

        def _run(item: T) -> R:
            try:
                result = fn(item)
            except Exception:
                with self._lock:
                    self._failed += 1
                raise
            with self._lock:
                self._completed += 1
            return result

        with self._lock:
            self._submitted += len(items)
        if self._workers == 1 or len(items) <= 1:
            return [_run(item) for item in items]
        with ThreadPoolExecutor(max_workers=self._workers) as pool:
            results = list(pool.map(_run, items))
        logger.debug(
            "executor.map workers=%d items=%d", self._workers, len(items)
        )
        return results

    def get_metrics(self) -> ExecutorMetrics:
        """現在のメトリクスを取得する."""
        with self._lock:
            return ExecutorMetrics(
                workers=self._workers,
                blocks_submitted=self._submitted,
                blocks_completed=self._completed,
                blocks_failed=self._failed,
            )
