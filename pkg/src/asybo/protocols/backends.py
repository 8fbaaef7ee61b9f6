# src/asybo/protocols/backends.py

"""
評価バックエンド関連のプロトコル定義
"""

from dataclasses import dataclass
from typing import Protocol, Sequence

from typing_extensions import runtime_checkable

from ..evaluation.models import BackendOutcome


@runtime_checkable
class EvaluationBackend(Protocol):
    """コスト関数評価バックエンドのプロトコル"""

    def submit(self, x: Sequence[float]) -> str:
        """
        評価を 1 回投入する

        Args:
            x: 評価点

        Returns:
            バックエンド側のジョブ ID

        Raises:
            BackendTransportError: 投入に失敗した場合
        """
        ...

    def poll(self, job_id: str) -> BackendOutcome:
        """
        ジョブの状態をブロックせずに確認する

        Args:
            job_id: submit が返した ID

        Returns:
            ValueNotReady / Value / EvaluationFailed / EvaluateAgain のいずれか
        """
        ...


@runtime_checkable
class Clock(Protocol):
    """時刻源（実時間または仮想時間）"""

    def now(self) -> float:
        ...

    def sleep(self, seconds: float) -> None:
        ...


@dataclass(frozen=True)
class CommandResult:
    """外部コマンドの実行結果"""

    returncode: int
    stdout: str
    stderr: str = ""


@runtime_checkable
class CommandRunner(Protocol):
    """リモート投入用コマンドランナーのプロトコル（SSH 等の実装差し替え点）"""

    def run(self, argv: Sequence[str]) -> CommandResult:
        """
        コマンドを実行して結果を返す

        Args:
            argv: コマンドと引数

        Returns:
            終了コードと標準出力・標準エラー
        """
        ...
