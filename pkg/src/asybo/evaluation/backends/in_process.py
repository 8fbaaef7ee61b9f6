"""
プロセス内バックエンド: Python 関数をワーカースレッド（または投入時に同期）で評価する
"""

import concurrent.futures
import itertools
import logging
import threading
from typing import Callable, Dict, Sequence

import numpy as np

from ..models import BackendOutcome

logger = logging.getLogger(__name__)

CostFunction = Callable[[np.ndarray], float]


class InProcessBackend:
    """ユーザー関数をプロセス内で評価するバックエンド"""

    def __init__(self, fn: CostFunction, max_workers: int = 0):
        self.fn = fn
        self.max_workers = max_workers
        self._ids = itertools.count(1)
        self._lock = threading.Lock()
        self._outcomes: Dict[str, BackendOutcome] = {}
        self._futures: Dict[str, concurrent.futures.Future] = {}
        self._executor = (
            concurrent.futures.ThreadPoolExecutor(max_workers=max_workers, thread_name_prefix="asybo-eval")
            if max_workers > 0
            else None
        )

    def _call(self, x: Sequence[float]) -> BackendOutcome:
        try:
            return BackendOutcome.of(self.fn(np.asarray(x, dtype=float)))
        except Exception as e:
            logger.warning(f"コスト関数の評価で例外が発生しました: {e}")
            return BackendOutcome.failed(f"{type(e).__name__}: {e}")

    def submit(self, x: Sequence[float]) -> str:
        with self._lock:
            job_id = f"inproc-{next(self._ids)}"
        if self._executor is None:
            outcome = self._call(x)
            with self._lock:
                self._outcomes[job_id] = outcome
        else:
            future = self._executor.submit(self._call, tuple(x))
            with self._lock:
                self._futures[job_id] = future
        return job_id

    def poll(self, job_id: str) -> BackendOutcome:
        with self._lock:
            if job_id in self._outcomes:
                return self._outcomes[job_id]
            future = self._futures.get(job_id)
        if future is None:
            return BackendOutcome.failed(f"unknown job id: {job_id}")
        if not future.done():
            return BackendOutcome.not_ready()
        outcome = future.result()
        with self._lock:
            self._outcomes[job_id] = outcome
            self._futures.pop(job_id, None)
        return outcome

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)

    def __enter__(self) -> "InProcessBackend":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
