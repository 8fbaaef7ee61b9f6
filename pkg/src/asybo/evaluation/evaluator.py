"""
非同期評価器

新規点と保留中の旧点を受け取り、同時実行数の上限を守りながら
バックエンドに投入する。新規点のうち blocking_fraction 分が確定した
時点で、完了・保留・失敗の 3 リストを返す。旧点は待たない。
"""

import logging
import math
from collections import deque
from dataclasses import dataclass
from typing import Deque, Dict, List, Optional, Sequence

from ..core.error_handler import ErrorHandler
from ..protocols.backends import Clock, EvaluationBackend
from .clock import RealClock
from .models import (
    BackendOutcome,
    EvaluationRecord,
    EvaluationStatus,
    EvaluatorConfig,
    EvaluatorReport,
    OutcomeKind,
)

logger = logging.getLogger(__name__)

# ⌈fraction·|new|⌉ を浮動小数の丸めで 1 つ多く取らないための余裕
THRESHOLD_EPSILON = 1e-9


def required_resolutions(blocking_fraction: float, n_new: int) -> int:
    """返却前に確定している必要がある新規点の数"""
    return min(n_new, max(0, math.ceil(blocking_fraction * n_new - THRESHOLD_EPSILON)))


@dataclass
class _Job:
    """評価器内部の可変ジョブ状態"""

    id: str
    x: tuple
    iteration: int
    status: EvaluationStatus = EvaluationStatus.QUEUED
    attempts: int = 0
    backend_id: Optional[str] = None
    value: Optional[float] = None
    reason: Optional[str] = None
    submit_time: Optional[float] = None
    complete_time: Optional[float] = None

    @property
    def resolved(self) -> bool:
        return self.status in (EvaluationStatus.COMPLETED, EvaluationStatus.FAILED)

    def to_record(self) -> EvaluationRecord:
        return EvaluationRecord(
            id=self.id,
            x=self.x,
            status=self.status,
            value=self.value if self.status is EvaluationStatus.COMPLETED else None,
            reason=self.reason if self.status is EvaluationStatus.FAILED else None,
            submit_time=self.submit_time,
            complete_time=self.complete_time,
            attempts=self.attempts,
            iteration=self.iteration,
        )


class AsyncEvaluator:
    """ブロッキング率付き非同期評価器"""

    def __init__(
        self,
        config: EvaluatorConfig,
        backend: EvaluationBackend,
        clock: Optional[Clock] = None,
        id_prefix: str = "e",
        start_counter: int = 0,
    ):
        self.config = config
        self.backend = backend
        self.clock = clock or RealClock()
        self.id_prefix = id_prefix
        self._counter = start_counter
        self._jobs: Dict[str, _Job] = {}
        self._queue: Deque[_Job] = deque()
        self._backend_name = type(backend).__name__

    @property
    def next_counter(self) -> int:
        return self._counter

    def _new_job(self, x: Sequence[float], iteration: int) -> _Job:
        self._counter += 1
        while f"{self.id_prefix}{self._counter:06d}" in self._jobs:
            self._counter += 1
        job = _Job(id=f"{self.id_prefix}{self._counter:06d}", x=tuple(float(v) for v in x), iteration=iteration)
        self._jobs[job.id] = job
        return job

    def _adopt(self, record: EvaluationRecord) -> _Job:
        """前回返した保留レコード（またはチェックポイントから復元したもの）をジョブに戻す"""
        job = self._jobs.get(record.id)
        if job is not None:
            return job
        job = _Job(
            id=record.id,
            x=tuple(record.x),
            iteration=record.iteration,
            attempts=record.attempts,
            submit_time=record.submit_time,
        )
        if record.is_resolved:
            job.status = record.status
            job.value = record.value
            job.reason = record.reason
            job.complete_time = record.complete_time
        else:
            logger.info(f"未追跡の保留レコード {record.id} を引き取り、再投入します")
        self._jobs[job.id] = job
        return job

    def _fail(self, job: _Job, reason: str) -> None:
        job.status = EvaluationStatus.FAILED
        job.reason = reason
        job.complete_time = self.clock.now()
        job.backend_id = None
        logger.warning(f"評価 {job.id} が失敗しました: {reason}")

    def _running_count(self, jobs: List[_Job]) -> int:
        return sum(1 for job in jobs if job.status is EvaluationStatus.RUNNING)

    def _dispatch(self, jobs: List[_Job]) -> int:
        """上限まで待ち行列のジョブを投入し、投入件数を返す"""
        running = self._running_count(jobs)
        dispatched = 0
        while self._queue and running < self.config.max_simultaneous:
            job = self._queue.popleft()
            if job.status is not EvaluationStatus.QUEUED:
                continue
            job.attempts += 1
            if job.submit_time is None:
                job.submit_time = self.clock.now()
            dispatched += 1
            try:
                job.backend_id = self.backend.submit(job.x)
            except Exception as e:
                info = ErrorHandler.handle_backend_error(e, self._backend_name, "submit")
                self._fail(job, f"transport: {info['error']}")
                continue
            job.status = EvaluationStatus.RUNNING
            running += 1
        return dispatched

    def _apply(self, job: _Job, outcome: BackendOutcome) -> bool:
        """poll 結果を反映し、状態が変わったかを返す"""
        if outcome.kind is OutcomeKind.VALUE_NOT_READY:
            return False
        if outcome.kind is OutcomeKind.VALUE:
            if outcome.value is None or not math.isfinite(outcome.value):
                self._fail(job, f"non-finite value: {outcome.value}")
            else:
                job.status = EvaluationStatus.COMPLETED
                job.value = float(outcome.value)
                job.complete_time = self.clock.now()
                job.backend_id = None
            return True
        if outcome.kind is OutcomeKind.EVALUATION_FAILED:
            self._fail(job, outcome.reason or "evaluation failed")
            return True

        # EvaluateAgain
        if job.attempts >= self.config.max_attempts:
            self._fail(job, f"retries exhausted after {job.attempts} attempts")
        else:
            logger.info(f"評価 {job.id} を再投入します（{job.attempts}/{self.config.max_attempts} 回目まで実施済み）")
            job.status = EvaluationStatus.QUEUED
            job.backend_id = None
            self._queue.append(job)
        return True

    def _blocked_by_old(self, new_jobs: List[_Job], jobs: List[_Job]) -> bool:
        """新規点が 1 件も実行中でなく、上限が旧点で埋まっているか"""
        if any(job.status is EvaluationStatus.RUNNING for job in new_jobs):
            return False
        return self._running_count(jobs) >= self.config.max_simultaneous

    def _poll_running(self, jobs: List[_Job]) -> bool:
        changed = False
        for job in jobs:
            if job.status is not EvaluationStatus.RUNNING:
                continue
            try:
                outcome = self.backend.poll(job.backend_id)
            except Exception as e:
                info = ErrorHandler.handle_backend_error(e, self._backend_name, "poll")
                self._fail(job, f"transport: {info['error']}")
                changed = True
                continue
            changed = self._apply(job, outcome) or changed
        return changed

    def evaluate(
        self,
        new: Sequence[Sequence[float]],
        old: Sequence[EvaluationRecord] = (),
        blocking_fraction: Optional[float] = None,
        iteration: int = 0,
    ) -> EvaluatorReport:
        """
        新規点を評価し、旧点の状態を回収する

        同時実行上限がすべて旧点で埋まり新規点を 1 件も投入できないときは、
        しきい値に届いていなくても待たずに返す（capacity_blocked=True）。

        Args:
            new: 今回の反復で提案された点
            old: 以前の呼び出しが保留として返したレコード
            blocking_fraction: この呼び出しだけの上書き値（None なら設定値）
            iteration: 新規点を提案した反復番号

        Returns:
            完了・保留・失敗に分けた EvaluatorReport
        """
        fraction = self.config.blocking_fraction if blocking_fraction is None else blocking_fraction
        old_jobs = [self._adopt(record) for record in old]
        new_jobs = [self._new_job(x, iteration) for x in new]
        jobs = new_jobs + old_jobs

        # 新規点を先頭に、未投入の旧点と再投入待ちはその後ろに並べる
        old_ids = {job.id for job in old_jobs}
        carried = [job for job in self._queue if job.status is EvaluationStatus.QUEUED and job.id in old_ids]
        self._queue = deque(new_jobs)
        queued_ids = {job.id for job in new_jobs}
        for job in carried + old_jobs:
            if job.status is EvaluationStatus.QUEUED and job.id not in queued_ids:
                self._queue.append(job)
                queued_ids.add(job.id)

        need = required_resolutions(fraction, len(new_jobs))
        self._dispatch(jobs)
        blocked = False
        while sum(1 for job in new_jobs if job.resolved) < need:
            if self._blocked_by_old(new_jobs, jobs):
                blocked = True
                logger.info(
                    f"同時実行上限 {self.config.max_simultaneous} を旧点が占有しているため、"
                    f"新規点を待ち行列に残して返します"
                )
                break
            changed = self._poll_running(jobs)
            changed = self._dispatch(jobs) > 0 or changed
            if not changed:
                self.clock.sleep(self.config.poll_interval)

        # 返却前に旧点だけを 1 回確認する（待たない）
        self._poll_running(old_jobs)
        self._dispatch(jobs)

        completed, pending, failed = [], [], []
        for job in jobs:
            record = job.to_record()
            if job.status is EvaluationStatus.COMPLETED:
                completed.append(record)
            elif job.status is EvaluationStatus.FAILED:
                failed.append(record)
            else:
                pending.append(record)
            if job.resolved:
                self._jobs.pop(job.id, None)

        logger.debug(
            f"評価器: 新規 {len(new_jobs)} / 旧 {len(old_jobs)} → "
            f"完了 {len(completed)} / 保留 {len(pending)} / 失敗 {len(failed)}"
        )
        return EvaluatorReport(
            completed=tuple(completed), pending=tuple(pending), failed=tuple(failed), capacity_blocked=blocked
        )


def evaluate(
    config: EvaluatorConfig,
    backend: EvaluationBackend,
    new: Sequence[Sequence[float]],
    old: Sequence[EvaluationRecord] = (),
    clock: Optional[Clock] = None,
) -> EvaluatorReport:
    """1 回限りの評価（状態を持ち越さない呼び出し向け）"""
    return AsyncEvaluator(config, backend, clock).evaluate(new, old)
