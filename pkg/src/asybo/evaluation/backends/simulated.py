"""
遅延シミュレーションバックエンド

評価ごとに正規分布（0 で切り詰め、負値は引き直し）から所要時間を引き、
時計がその時刻を過ぎるまで値を公開しない。仮想時計を使えば
タイミング実験が実時間ほぼゼロで決定的に再現できる。
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from ...protocols.backends import Clock
from ..models import BackendOutcome

logger = logging.getLogger(__name__)


def draw_latency(rng: np.random.Generator, mean: float, std: float) -> float:
    """切り詰め正規分布から 1 回分の所要時間を引く"""
    if std <= 0.0:
        return max(mean, 0.0)
    while True:
        duration = float(rng.normal(mean, std))
        if duration >= 0.0:
            return duration


@dataclass
class _SimulatedJob:
    x: np.ndarray
    ready_at: float
    fails: bool


class SimulatedLatencyBackend:
    """所要時間付きでコスト関数を評価するバックエンド"""

    def __init__(
        self,
        fn: Callable[[np.ndarray], float],
        clock: Clock,
        latency_mean: float,
        latency_std: float = 0.0,
        seed: int = 0,
        failure_probability: float = 0.0,
    ):
        if latency_mean < 0 or latency_std < 0:
            raise ValueError(f"所要時間の分布が不正です: mean={latency_mean}, std={latency_std}")
        if not 0.0 <= failure_probability <= 1.0:
            raise ValueError(f"failure_probability は [0, 1] の範囲で指定してください: {failure_probability}")
        self.fn = fn
        self.clock = clock
        self.latency_mean = latency_mean
        self.latency_std = latency_std
        self.failure_probability = failure_probability
        self._rng = np.random.default_rng(seed)
        self._ids = itertools.count(1)
        self._jobs: Dict[str, _SimulatedJob] = {}
        self._outcomes: Dict[str, BackendOutcome] = {}

    def submit(self, x: Sequence[float]) -> str:
        duration = draw_latency(self._rng, self.latency_mean, self.latency_std)
        fails = self.failure_probability > 0.0 and bool(self._rng.random() < self.failure_probability)
        job_id = f"sim-{next(self._ids)}"
        self._jobs[job_id] = _SimulatedJob(
            x=np.asarray(x, dtype=float), ready_at=self.clock.now() + duration, fails=fails
        )
        return job_id

    def ready_at(self, job_id: str) -> Optional[float]:
        job = self._jobs.get(job_id)
        return None if job is None else job.ready_at

    def poll(self, job_id: str) -> BackendOutcome:
        if job_id in self._outcomes:
            return self._outcomes[job_id]
        job = self._jobs.get(job_id)
        if job is None:
            return BackendOutcome.failed(f"unknown job id: {job_id}")
        if self.clock.now() < job.ready_at:
            return BackendOutcome.not_ready()

        if job.fails:
            outcome = BackendOutcome.failed("simulated failure")
        else:
            outcome = BackendOutcome.of(self.fn(job.x))
        self._outcomes[job_id] = outcome
        return outcome
