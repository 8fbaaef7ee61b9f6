"""
チェックポイントの書き出しと復元

行区切り・タブ区切りのテキスト形式:

    asybo-checkpoint  <version>  <config_hash>  <dim>
    config    <実効設定の JSON>
    record    <id> <status> <iteration> <block> <attempts> <submit> <complete> <value> <x1,...,xd> <reason JSON>
    ...
    kernel    <l1> ... <lm>
    refit     <block> <l1> ... <lm>          （0 行以上）
    rng       <乱数生成器状態の JSON>
    counters  <iteration> <next_id> <submitted>
    end       <record 行の件数>

数値はすべて %.17e の 10 進指数表記、欠損は "-"。書き込みは一時ファイルに
書いてから os.replace で置き換える。
"""

import json
import logging
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from ..evaluation.models import EvaluationRecord, EvaluationStatus
from ..surrogate.kernel import KernelSpec, set_length_scale
from .config import RunConfig, config_hash
from .error_handler import CheckpointError, CheckpointVersionError

logger = logging.getLogger(__name__)

FORMAT_NAME = "asybo-checkpoint"
FORMAT_VERSION = 1
MISSING = "-"


@dataclass(frozen=True)
class CheckpointData:
    """チェックポイントに保存する実行状態"""

    config: RunConfig
    history: Tuple[EvaluationRecord, ...]
    pending: Tuple[EvaluationRecord, ...]
    kernel: KernelSpec
    refits: Tuple[Tuple[int, Tuple[float, ...]], ...]
    rng_state: Dict[str, Any]
    iteration: int
    next_id: int
    submitted: int


def _num(value: Optional[float]) -> str:
    return MISSING if value is None else "%.17e" % value


def _opt_float(token: str) -> Optional[float]:
    return None if token == MISSING else float(token)


def _opt_int(token: str) -> Optional[int]:
    return None if token == MISSING else int(token)


def _record_line(record: EvaluationRecord) -> str:
    fields = [
        "record",
        record.id,
        record.status.value,
        str(record.iteration),
        MISSING if record.block is None else str(record.block),
        str(record.attempts),
        _num(record.submit_time),
        _num(record.complete_time),
        _num(record.value),
        ",".join(_num(v) for v in record.x),
        json.dumps(record.reason),
    ]
    return "\t".join(fields)


def _parse_record(fields: List[str], dim: int) -> EvaluationRecord:
    if len(fields) != 11:
        raise ValueError(f"フィールド数が 11 ではありません ({len(fields)})")
    x = tuple(float(token) for token in fields[9].split(","))
    if len(x) != dim:
        raise ValueError(f"座標の次元 {len(x)} がヘッダーの次元 {dim} と一致しません")
    return EvaluationRecord(
        id=fields[1],
        status=EvaluationStatus(fields[2]),
        iteration=int(fields[3]),
        block=_opt_int(fields[4]),
        attempts=int(fields[5]),
        submit_time=_opt_float(fields[6]),
        complete_time=_opt_float(fields[7]),
        value=_opt_float(fields[8]),
        x=x,
        reason=json.loads(fields[10]),
    )


def render_checkpoint(data: CheckpointData) -> str:
    """チェックポイントをテキストに変換"""
    lines = [
        "\t".join([FORMAT_NAME, str(FORMAT_VERSION), config_hash(data.config), str(data.config.dim)]),
        "\t".join(["config", json.dumps(data.config.model_dump(mode="json"), sort_keys=True)]),
    ]
    records = list(data.history) + list(data.pending)
    lines.extend(_record_line(record) for record in records)
    lines.append("\t".join(["kernel"] + [_num(v) for v in data.kernel.length_scale]))
    for block, scales in data.refits:
        lines.append("\t".join(["refit", str(block)] + [_num(v) for v in scales]))
    lines.append("\t".join(["rng", json.dumps(data.rng_state, sort_keys=True)]))
    lines.append("\t".join(["counters", str(data.iteration), str(data.next_id), str(data.submitted)]))
    lines.append("\t".join(["end", str(len(records))]))
    return "\n".join(lines) + "\n"


def write_checkpoint(data: CheckpointData, path: str) -> None:
    """一時ファイル経由でアトミックに書き出す"""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    text = render_checkpoint(data)
    fd, tmp_path = tempfile.mkstemp(prefix=f".{target.name}.", suffix=".tmp", dir=str(target.parent))
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_path, target)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise
    logger.info(f"チェックポイントを書き出しました: {target} (反復 {data.iteration}, 記録 {len(data.history) + len(data.pending)} 件)")


def parse_checkpoint(text: str, source: str = "<checkpoint>") -> CheckpointData:
    """テキストからチェックポイントを復元（不正な行があれば例外）"""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise CheckpointError(f"{source}: 空のファイルです", line=1, record="header")

    header = lines[0].split("\t")
    if len(header) != 4 or header[0] != FORMAT_NAME:
        raise CheckpointError(f"{source}:1: チェックポイントのヘッダーではありません", line=1, record="header")
    if header[1] != str(FORMAT_VERSION):
        raise CheckpointVersionError(
            f"{source}: フォーマットバージョン {header[1]} は未対応です（対応: {FORMAT_VERSION}）", line=1, record="header"
        )
    expected_hash = header[2]
    try:
        dim = int(header[3])
    except ValueError as e:
        raise CheckpointError(f"{source}:1: 次元が整数ではありません: {header[3]}", line=1, record="header") from e

    config: Optional[RunConfig] = None
    records: List[EvaluationRecord] = []
    scales: Optional[Tuple[float, ...]] = None
    refits: List[Tuple[int, Tuple[float, ...]]] = []
    rng_state: Optional[Dict[str, Any]] = None
    counters: Optional[Tuple[int, int, int]] = None
    ended = False

    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        kind = fields[0]
        if ended:
            raise CheckpointError(f"{source}:{lineno}: end の後に行があります", line=lineno, record=kind)
        try:
            if kind == "config":
                config = RunConfig.model_validate(json.loads(fields[1]))
                if config_hash(config) != expected_hash:
                    raise ValueError("設定のハッシュがヘッダーと一致しません")
            elif kind == "record":
                records.append(_parse_record(fields, dim))
            elif kind == "kernel":
                scales = tuple(float(token) for token in fields[1:])
            elif kind == "refit":
                refits.append((int(fields[1]), tuple(float(token) for token in fields[2:])))
            elif kind == "rng":
                rng_state = json.loads(fields[1])
            elif kind == "counters":
                counters = (int(fields[1]), int(fields[2]), int(fields[3]))
            elif kind == "end":
                if int(fields[1]) != len(records):
                    raise ValueError(f"記録件数 {len(records)} が end の値 {fields[1]} と一致しません")
                ended = True
            else:
                raise ValueError(f"未知のレコード種別です: {kind!r}")
        except CheckpointError:
            raise
        except Exception as e:
            raise CheckpointError(f"{source}:{lineno}: {kind} レコードが不正です: {e}", line=lineno, record=kind) from e

    if not ended or config is None or scales is None or rng_state is None or counters is None:
        raise CheckpointError(
            f"{source}:{len(lines) + 1}: ファイルが途中で切れています", line=len(lines) + 1, record="end"
        )

    try:
        kernel = set_length_scale(config.kernel, scales)
    except Exception as e:
        raise CheckpointError(f"{source}: kernel レコードが不正です: {e}", record="kernel") from e

    history = tuple(r for r in records if r.is_resolved)
    pending = tuple(r for r in records if not r.is_resolved)
    iteration, next_id, submitted = counters
    return CheckpointData(
        config=config,
        history=history,
        pending=pending,
        kernel=kernel,
        refits=tuple(refits),
        rng_state=rng_state,
        iteration=iteration,
        next_id=next_id,
        submitted=submitted,
    )


def read_checkpoint(path: str) -> CheckpointData:
    """チェックポイントファイルを読み込む"""
    checkpoint_path = Path(path)
    try:
        text = checkpoint_path.read_text(encoding="utf-8")
    except OSError as e:
        raise CheckpointError(f"チェックポイントを読み込めません: {path}: {e}") from e
    data = parse_checkpoint(text, source=str(checkpoint_path))
    logger.info(f"チェックポイントを読み込みました: {path} (反復 {data.iteration})")
    return data
