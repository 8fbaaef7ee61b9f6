"""
実行結果の書き出し（評価履歴 CSV・サマリー・クリギンググリッド）
"""

import csv
import logging
from collections import Counter
from pathlib import Path
from typing import Iterable, Optional, Sequence, Tuple

from ..evaluation.models import EvaluationRecord, EvaluationStatus
from .config import RunConfig, flatten_config

logger = logging.getLogger(__name__)


def _cell(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def history_header(dim: int) -> list:
    return ["iteration", "id", *[f"x{i + 1}" for i in range(dim)], "value", "status", "submit_time", "complete_time"]


def write_history_csv(path: str, records: Iterable[EvaluationRecord], dim: int) -> Path:
    """評価履歴を 1 行 1 評価の CSV に書き出す"""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with target.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(history_header(dim))
        for record in records:
            writer.writerow(
                [
                    record.iteration,
                    record.id,
                    *[repr(float(v)) for v in record.x],
                    _cell(record.value),
                    record.status.value,
                    _cell(record.submit_time),
                    _cell(record.complete_time),
                ]
            )
            count += 1
    logger.info(f"評価履歴を書き出しました: {target} ({count} 件)")
    return target


def status_counts(records: Iterable[EvaluationRecord]) -> Counter:
    counts = Counter(record.status.value for record in records)
    for status in EvaluationStatus:
        counts.setdefault(status.value, 0)
    return counts


def render_summary(
    config: RunConfig,
    records: Sequence[EvaluationRecord],
    best: Optional[Tuple[Tuple[float, ...], float]],
    wall_time: float,
    command: str = "optimize",
) -> str:
    """summary.txt の本文（実効設定・最良点・状態別件数・実行時間）"""
    lines = [f"# asybo {command} summary", "", "[effective config]"]
    lines.extend(f"{key} = {value}" for key, value in sorted(flatten_config(config).items()))
    lines.extend(["", "[best]"])
    if best is None:
        lines.append("point = none")
        lines.append("value = none")
    else:
        lines.append(f"point = [{', '.join(repr(float(v)) for v in best[0])}]")
        lines.append(f"value = {best[1]!r}")
    lines.extend(["", "[evaluations]"])
    counts = status_counts(records)
    lines.append(f"total = {len(records)}")
    lines.extend(f"{status.value} = {counts[status.value]}" for status in EvaluationStatus)
    lines.extend(["", "[time]", f"wall_time_seconds = {wall_time:.3f}"])
    return "\n".join(lines) + "\n"


def write_summary(path: str, text: str) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(text, encoding="utf-8")
    logger.info(f"サマリーを書き出しました: {target}")
    return target


def write_rows_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """汎用の CSV 書き出し（グリッド・実験結果）"""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)
    logger.info(f"CSV を書き出しました: {target}")
    return target
