"""
リモート投入バックエンド

投入コマンドでジョブ ID を受け取り、状態コマンドでジョブの状態を追跡する。
コマンドの実行は CommandRunner に委ね、実機の SSH 等はその実装で差し替える。
FakeScheduler はキュー待ちと実行時間をプロセス内で再現するランナー。

状態コマンドの出力形式（1 行目）:
    PENDING | RUNNING | COMPLETED <value> | FAILED [reason] | RETRY
"""

import itertools
import logging
import re
import threading
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from ...core.error_handler import BackendTransportError
from ...protocols.backends import Clock, CommandResult, CommandRunner
from ..models import BackendOutcome, OutcomeKind
from .simulated import draw_latency

logger = logging.getLogger(__name__)

JOB_ID_PATTERN = re.compile(r"(\d+)\s*$")


def parse_job_id(stdout: str) -> str:
    """投入コマンドの出力（例: "Submitted batch job 42"）からジョブ ID を取り出す"""
    lines = [line.strip() for line in stdout.splitlines() if line.strip()]
    match = JOB_ID_PATTERN.search(lines[-1]) if lines else None
    if match is None:
        raise BackendTransportError(f"投入結果からジョブ ID を読み取れません: {stdout!r}")
    return match.group(1)


def parse_job_state(stdout: str) -> BackendOutcome:
    """状態コマンドの出力を BackendOutcome に変換"""
    line = stdout.strip().splitlines()[0].strip() if stdout.strip() else ""
    state, _, rest = line.partition(" ")
    state = state.upper()
    if state in ("PENDING", "RUNNING"):
        return BackendOutcome.not_ready()
    if state == "COMPLETED":
        try:
            return BackendOutcome.of(float(rest))
        except ValueError:
            return BackendOutcome.failed(f"unparseable value: {rest!r}")
    if state == "FAILED":
        return BackendOutcome.failed(rest.strip() or "job failed")
    if state == "RETRY":
        return BackendOutcome.again()
    raise BackendTransportError(f"未知のジョブ状態です: {line!r}")


class RemoteCommandBackend:
    """投入コマンドと状態コマンドでジョブを管理するバックエンド"""

    def __init__(
        self,
        runner: CommandRunner,
        submit_command: Sequence[str] = ("submit",),
        status_command: Sequence[str] = ("status",),
    ):
        self.runner = runner
        self.submit_command = list(submit_command)
        self.status_command = list(status_command)
        self._outcomes: Dict[str, BackendOutcome] = {}
        self._lock = threading.Lock()

    def _run(self, argv: Sequence[str]) -> CommandResult:
        result = self.runner.run(argv)
        if result.returncode != 0:
            raise BackendTransportError(
                f"コマンドが失敗しました (exit {result.returncode}): {' '.join(argv)}: {result.stderr.strip()}"
            )
        return result

    def submit(self, x: Sequence[float]) -> str:
        result = self._run(self.submit_command + [repr(float(v)) for v in x])
        job_id = parse_job_id(result.stdout)
        logger.debug(f"ジョブ {job_id} を投入しました")
        return job_id

    def poll(self, job_id: str) -> BackendOutcome:
        with self._lock:
            if job_id in self._outcomes:
                return self._outcomes[job_id]
        outcome = parse_job_state(self._run(self.status_command + [job_id]).stdout)
        if outcome.kind is not OutcomeKind.VALUE_NOT_READY:
            with self._lock:
                self._outcomes[job_id] = outcome
        return outcome


@dataclass
class _ScheduledJob:
    x: np.ndarray
    submitted_at: float
    queue_wait: float
    run_time: float
    fails: bool


class FakeScheduler:
    """キュー待ち＋実行時間をプロセス内で模擬するコマンドランナー"""

    SUBMIT_VERB = "submit"
    STATUS_VERB = "status"

    def __init__(
        self,
        fn: Callable[[np.ndarray], float],
        clock: Clock,
        run_time_mean: float = 0.0,
        run_time_std: float = 0.0,
        queue_wait_mean: float = 0.0,
        failure_probability: float = 0.0,
        retry_first: bool = False,
        seed: int = 0,
    ):
        self.fn = fn
        self.clock = clock
        self.run_time_mean = run_time_mean
        self.run_time_std = run_time_std
        self.queue_wait_mean = queue_wait_mean
        self.failure_probability = failure_probability
        self.retry_first = retry_first
        self._rng = np.random.default_rng(seed)
        self._ids = itertools.count(1001)
        self._jobs: Dict[str, _ScheduledJob] = {}
        self._retried: set = set()

    def _submit(self, args: Sequence[str]) -> CommandResult:
        try:
            x = np.array([float(a) for a in args])
        except ValueError:
            return CommandResult(returncode=1, stdout="", stderr=f"invalid coordinates: {args}")
        queue_wait = float(self._rng.exponential(self.queue_wait_mean)) if self.queue_wait_mean > 0 else 0.0
        run_time = draw_latency(self._rng, self.run_time_mean, self.run_time_std)
        fails = self.failure_probability > 0.0 and bool(self._rng.random() < self.failure_probability)
        job_id = str(next(self._ids))
        self._jobs[job_id] = _ScheduledJob(
            x=x, submitted_at=self.clock.now(), queue_wait=queue_wait, run_time=run_time, fails=fails
        )
        return CommandResult(returncode=0, stdout=f"Submitted batch job {job_id}\n")

    def _status(self, job_id: str) -> CommandResult:
        job = self._jobs.get(job_id)
        if job is None:
            return CommandResult(returncode=1, stdout="", stderr=f"unknown job {job_id}")
        elapsed = self.clock.now() - job.submitted_at
        if elapsed < job.queue_wait:
            return CommandResult(returncode=0, stdout="PENDING\n")
        if elapsed < job.queue_wait + job.run_time:
            return CommandResult(returncode=0, stdout="RUNNING\n")
        if job.fails:
            return CommandResult(returncode=0, stdout="FAILED node failure\n")
        key = tuple(job.x)
        if self.retry_first and key not in self._retried:
            self._retried.add(key)
            return CommandResult(returncode=0, stdout="RETRY\n")
        return CommandResult(returncode=0, stdout=f"COMPLETED {float(self.fn(job.x))!r}\n")

    def run(self, argv: Sequence[str]) -> CommandResult:
        if not argv:
            return CommandResult(returncode=2, stdout="", stderr="empty command")
        verb, args = argv[0], list(argv[1:])
        if verb == self.SUBMIT_VERB:
            return self._submit(args)
        if verb == self.STATUS_VERB and len(args) == 1:
            return self._status(args[0])
        return CommandResult(returncode=2, stdout="", stderr=f"unknown command: {' '.join(argv)}")

    def job_count(self) -> int:
        return len(self._jobs)

    def queue_wait_of(self, job_id: str) -> Optional[float]:
        job = self._jobs.get(job_id)
        return None if job is None else job.queue_wait
