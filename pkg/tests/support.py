"""
テスト用のスクリプト化バックエンドと設定ヘルパー
"""

import itertools
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.asybo.core.config import RunConfig, build_run_config
from src.asybo.evaluation.models import BackendOutcome, OutcomeKind

# 1 回の投入に対する poll 応答列（最後の応答はそれ以降も繰り返す）
Script = Callable[[Tuple[float, ...], int], List[BackendOutcome]]


def value_after(polls: int, value: float) -> List[BackendOutcome]:
    """polls 回 ValueNotReady を返した後に Value を返す応答列"""
    return [BackendOutcome.not_ready()] * polls + [BackendOutcome.of(value)]


def never_ready() -> List[BackendOutcome]:
    return [BackendOutcome.not_ready()]


class ScriptedBackend:
    """
    点ごと・投入回ごとの応答列に従って振る舞うバックエンド

    同時に実行中のジョブ数の最大値と、点ごとの投入回数を記録する。
    """

    def __init__(self, script: Optional[Script] = None):
        self.script = script or (lambda x, attempt: [BackendOutcome.of(sum(x))])
        self._ids = itertools.count(1)
        self._responses: Dict[str, List[BackendOutcome]] = {}
        self._running: set = set()
        self.max_running = 0
        self.submissions: Dict[Tuple[float, ...], int] = {}
        self.poll_count = 0

    def submit(self, x: Sequence[float]) -> str:
        key = tuple(float(v) for v in x)
        attempt = self.submissions.get(key, 0) + 1
        self.submissions[key] = attempt
        job_id = f"scripted-{next(self._ids)}"
        self._responses[job_id] = list(self.script(key, attempt))
        self._running.add(job_id)
        self.max_running = max(self.max_running, len(self._running))
        return job_id

    def poll(self, job_id: str) -> BackendOutcome:
        self.poll_count += 1
        responses = self._responses[job_id]
        outcome = responses.pop(0) if len(responses) > 1 else responses[0]
        if outcome.kind is not OutcomeKind.VALUE_NOT_READY:
            self._running.discard(job_id)
        return outcome

    @property
    def running(self) -> int:
        return len(self._running)


class FailingSubmitBackend:
    """submit が常に通信エラーになるバックエンド"""

    def submit(self, x: Sequence[float]) -> str:
        raise ConnectionError("scheduler unreachable")

    def poll(self, job_id: str) -> BackendOutcome:
        raise AssertionError("poll は呼ばれないはず")


def sphere(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sum((x - 0.25) ** 2))


def make_config(overrides: Optional[Dict[str, object]] = None) -> RunConfig:
    """テスト用の小さな RunConfig（dotted key の辞書で上書き可能）"""
    flat = {
        "run.bounds": [[-1.0, 1.0], [-1.0, 1.0]],
        "run.max_evals": 12,
        "run.n_init": 4,
        "run.seed": 7,
        "acq.batch_k": 2,
        "acqopt.n_starts": 4,
        "acqopt.max_evals": 200,
        "hyper.budget": 8,
        "hyper.grid_points": 6,
        "evaluator.poll_interval_ms": 1000,
    }
    flat.update(overrides or {})
    return build_run_config(flat)

