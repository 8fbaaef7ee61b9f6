"""
サブプロセスバックエンド

評価点ごとに OS プロセスを 1 つ起動する。座標は引数 1..d に 1 つずつ
10 進表記で渡し、標準出力の最終行を結果として解釈する。

- 終了コード 0 かつ最終行が有限の数値 → Value
- 終了コード 0 かつ最終行が "RETRY" → EvaluateAgain
- 終了コード 0 以外、または解釈できない出力 → EvaluationFailed
"""

import itertools
import logging
import math
import os
import subprocess
import tempfile
import threading
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Sequence

from ...core.error_handler import BackendTransportError
from ..models import BackendOutcome

logger = logging.getLogger(__name__)

RETRY_TOKEN = "RETRY"


@dataclass
class _Process:
    proc: subprocess.Popen
    stdout_path: str


def parse_final_line(stdout: str) -> BackendOutcome:
    """正常終了したプロセスの標準出力を結果に変換"""
    lines = [line.strip() for line in stdout.splitlines() if line.strip()]
    if not lines:
        return BackendOutcome.failed("empty output")
    last = lines[-1]
    if last == RETRY_TOKEN:
        return BackendOutcome.again()
    try:
        value = float(last)
    except ValueError:
        return BackendOutcome.failed(f"unparseable output: {last!r}")
    if not math.isfinite(value):
        return BackendOutcome.failed(f"non-finite output: {last!r}")
    return BackendOutcome.of(value)


class SubprocessBackend:
    """評価ごとに外部コマンドを起動するバックエンド"""

    def __init__(
        self,
        command: Sequence[str],
        workdir: Optional[str] = None,
        env: Optional[Mapping[str, str]] = None,
    ):
        if not command:
            raise ValueError("command が空です")
        self.command = list(command)
        self.workdir = workdir
        self.env = dict(env) if env is not None else None
        self._ids = itertools.count(1)
        self._lock = threading.Lock()
        self._processes: Dict[str, _Process] = {}
        self._outcomes: Dict[str, BackendOutcome] = {}

    def submit(self, x: Sequence[float]) -> str:
        argv = self.command + [repr(float(v)) for v in x]
        fd, stdout_path = tempfile.mkstemp(prefix="asybo-", suffix=".out")
        try:
            with os.fdopen(fd, "wb") as stdout:
                proc = subprocess.Popen(
                    argv,
                    stdout=stdout,
                    stderr=subprocess.DEVNULL,
                    cwd=self.workdir,
                    env=self.env,
                )
        except OSError as e:
            os.unlink(stdout_path)
            raise BackendTransportError(f"プロセスを起動できません: {argv[0]}: {e}") from e

        with self._lock:
            job_id = f"proc-{next(self._ids)}"
            self._processes[job_id] = _Process(proc=proc, stdout_path=stdout_path)
        logger.debug(f"プロセス {proc.pid} を起動しました ({job_id})")
        return job_id

    def poll(self, job_id: str) -> BackendOutcome:
        with self._lock:
            if job_id in self._outcomes:
                return self._outcomes[job_id]
            running = self._processes.get(job_id)
        if running is None:
            return BackendOutcome.failed(f"unknown job id: {job_id}")

        returncode = running.proc.poll()
        if returncode is None:
            return BackendOutcome.not_ready()

        try:
            with open(running.stdout_path, encoding="utf-8", errors="replace") as f:
                stdout = f.read()
        except OSError as e:
            raise BackendTransportError(f"出力ファイルを読み込めません: {running.stdout_path}: {e}") from e
        finally:
            if os.path.exists(running.stdout_path):
                os.unlink(running.stdout_path)

        if returncode != 0:
            outcome = BackendOutcome.failed(f"exit code {returncode}")
        else:
            outcome = parse_final_line(stdout)
        with self._lock:
            self._outcomes[job_id] = outcome
            self._processes.pop(job_id, None)
        return outcome

    def close(self) -> None:
        """実行中のプロセスを終了させる"""
        with self._lock:
            processes = list(self._processes.values())
            self._processes.clear()
        for running in processes:
            if running.proc.poll() is None:
                running.proc.kill()
                running.proc.wait()
            if os.path.exists(running.stdout_path):
                os.unlink(running.stdout_path)
