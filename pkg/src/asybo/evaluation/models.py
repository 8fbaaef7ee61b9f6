"""
評価レコード・評価器設定・バックエンド結果のモデル定義
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator


class EvaluationStatus(str, Enum):
    """1 点の評価ライフサイクル"""

    QUEUED = "queued"
    RUNNING = "running"
    COMPLETED = "completed"
    PENDING = "pending"
    FAILED = "failed"


class EvaluationRecord(BaseModel):
    """1 点の評価記録（評価器がやり取りする単位）"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    id: str = Field(..., description="実行内で一意な評価 ID")
    x: Tuple[float, ...] = Field(..., description="評価点（元の座標系）")
    status: EvaluationStatus = Field(EvaluationStatus.QUEUED, description="評価状態")
    value: Optional[float] = Field(None, description="コスト値（完了時のみ）")
    reason: Optional[str] = Field(None, description="失敗理由")
    submit_time: Optional[float] = Field(None, description="初回投入時刻")
    complete_time: Optional[float] = Field(None, description="完了・失敗確定時刻")
    attempts: int = Field(0, ge=0, description="投入回数")
    iteration: int = Field(0, ge=0, description="この点を提案した反復")
    block: Optional[int] = Field(None, description="サロゲートに取り込まれたブロック番号")

    @model_validator(mode="after")
    def _check_value(self) -> "EvaluationRecord":
        if self.status is EvaluationStatus.COMPLETED:
            if self.value is None or not math.isfinite(self.value):
                raise ValueError(f"完了レコード {self.id} の値が有限ではありません: {self.value}")
        if self.status is EvaluationStatus.RUNNING and self.attempts < 1:
            raise ValueError(f"実行中レコード {self.id} の attempts が 0 です")
        return self

    @property
    def is_resolved(self) -> bool:
        return self.status in (EvaluationStatus.COMPLETED, EvaluationStatus.FAILED)


class EvaluatorConfig(BaseModel):
    """非同期評価器の設定"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    max_simultaneous: int = Field(4, ge=1, description="同時実行数の上限")
    blocking_fraction: float = Field(1.0, ge=0.0, le=1.0, description="返却前に確定を待つ新規点の割合")
    max_attempts: int = Field(3, ge=1, description="EvaluateAgain による再投入を含む最大投入回数")
    poll_interval_ms: float = Field(50.0, gt=0.0, description="ポーリング間隔（ミリ秒、仮想時計では時間単位×1000）")

    @property
    def poll_interval(self) -> float:
        return self.poll_interval_ms / 1000.0


class EvaluatorReport(BaseModel):
    """評価器 1 回の呼び出し結果（完了・保留・失敗の 3 リスト）"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    completed: Tuple[EvaluationRecord, ...] = ()
    pending: Tuple[EvaluationRecord, ...] = ()
    failed: Tuple[EvaluationRecord, ...] = ()
    capacity_blocked: bool = Field(
        False, description="旧点が同時実行上限を占有し、新規点を投入できないまま返したか"
    )

    @property
    def completed_points(self) -> List[Tuple[Tuple[float, ...], float]]:
        return [(r.x, r.value) for r in self.completed]

    @property
    def failed_points(self) -> List[Tuple[Tuple[float, ...], Optional[str]]]:
        return [(r.x, r.reason) for r in self.failed]

    def all_records(self) -> List[EvaluationRecord]:
        return [*self.completed, *self.pending, *self.failed]


class OutcomeKind(str, Enum):
    VALUE_NOT_READY = "ValueNotReady"
    VALUE = "Value"
    EVALUATION_FAILED = "EvaluationFailed"
    EVALUATE_AGAIN = "EvaluateAgain"


@dataclass(frozen=True)
class BackendOutcome:
    """バックエンドの poll 結果（4 種のいずれか 1 つ）"""

    kind: OutcomeKind
    value: Optional[float] = None
    reason: Optional[str] = None

    @classmethod
    def not_ready(cls) -> "BackendOutcome":
        return cls(OutcomeKind.VALUE_NOT_READY)

    @classmethod
    def of(cls, value: float) -> "BackendOutcome":
        return cls(OutcomeKind.VALUE, value=float(value))

    @classmethod
    def failed(cls, reason: str = "evaluation failed") -> "BackendOutcome":
        return cls(OutcomeKind.EVALUATION_FAILED, reason=reason)

    @classmethod
    def again(cls, reason: str = "evaluate again") -> "BackendOutcome":
        return cls(OutcomeKind.EVALUATE_AGAIN, reason=reason)
