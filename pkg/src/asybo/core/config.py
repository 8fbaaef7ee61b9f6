"""
環境設定と設定値の管理

実行設定はフラットな `key = value` 形式のテキストファイルから読み込み、
セクションごとの pydantic モデルで検証する。プロセス全体の設定
（ログレベル・出力先）は環境変数と .env から読み込む。
"""

import hashlib
import json
import logging
import logging.config
import math
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from ..acquisition.functions import AcquisitionFamily, AcquisitionSpec, KappaSchedule, ScheduleKind
from ..evaluation.models import EvaluatorConfig
from ..surrogate.kernel import KernelFamily, KernelSpec
from .error_handler import ConfigError

logger = logging.getLogger(__name__)

# run.batch_k は acq.batch_k の別名
KEY_ALIASES = {"run.batch_k": "acq.batch_k"}


class RunMode(str, Enum):
    """実行モード"""

    OPTIMIZE = "optimize"
    KRIGE = "krige"


class GpSettings(BaseModel):
    """ガウス過程サロゲート設定"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    jitter: float = Field(1e-10, ge=0.0, description="K の対角に加える正則化項")
    normalize_y: bool = Field(True, description="コスト値を標準化してからサロゲートに入れる")


class AcquisitionSettings(BaseModel):
    """獲得関数設定"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    family: AcquisitionFamily = AcquisitionFamily.LCB
    schedule: ScheduleKind = ScheduleKind.ANNEALING
    kappa0: float = Field(3.0, ge=0.0)
    decay: float = Field(0.95, gt=0.0, le=1.0)
    kappa_max: float = Field(10.0, ge=0.0)
    batch_k: int = Field(1, ge=1, description="1 反復あたりのインフィル点数")

    def to_spec(self, f_min: float = math.inf) -> AcquisitionSpec:
        return AcquisitionSpec(
            family=self.family,
            schedule=KappaSchedule(kind=self.schedule, kappa0=self.kappa0, decay=self.decay),
            kappa_max=self.kappa_max,
            f_min=f_min,
        )


class AcqOptSettings(BaseModel):
    """獲得関数最小化の設定"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    n_starts: Optional[int] = Field(None, ge=1, description="未指定なら 8·d")
    max_evals: int = Field(2000, ge=1)
    tol: float = Field(1e-6, gt=0.0)

    def starts_for(self, dim: int) -> int:
        return self.n_starts if self.n_starts is not None else 8 * dim


class HyperSettings(BaseModel):
    """ハイパーパラメータ（長さスケール）調整の設定"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    enabled: bool = True
    gate_n: Optional[int] = Field(None, ge=1, description="未指定なら max(5, 2·d)")
    scale_bounds: Tuple[float, float] = (1e-2, 1e1)
    budget: int = Field(40, ge=1)
    grid_points: int = Field(16, ge=1)

    @field_validator("scale_bounds")
    @classmethod
    def _check_bounds(cls, v: Tuple[float, float]) -> Tuple[float, float]:
        low, high = v
        if not (0.0 < low < high):
            raise ValueError("scale_bounds は 0 < lower < upper を満たす必要があります")
        return v

    def gate_for(self, dim: int) -> int:
        return self.gate_n if self.gate_n is not None else max(5, 2 * dim)


class RunSettings(BaseModel):
    """最適化ループの設定"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    bounds: List[Tuple[float, float]]
    mode: RunMode = RunMode.OPTIMIZE
    n_init: Optional[int] = Field(None, description="未指定なら max(2·d, 4)")
    max_evals: int = Field(50, ge=1, description="評価回数の予算")
    seed: int = 0
    checkpoint_path: Optional[str] = None
    checkpoint_every: int = Field(1, ge=1)
    drain_pending: bool = True
    grid_size: int = Field(101, ge=2, description="クリギング報告用グリッドの 1 次元あたり点数")

    @property
    def dim(self) -> int:
        return len(self.bounds)

    def initial_design_size(self) -> int:
        return self.n_init if self.n_init is not None else max(2 * self.dim, 4)


class ObjectiveSettings(BaseModel):
    """コスト関数と評価バックエンドの設定"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    backend: Literal["inprocess", "subprocess", "simulated", "remote"] = "inprocess"
    function: str = "rastrigin"
    command: Optional[List[str]] = None
    latency_mean: float = Field(100.0, ge=0.0)
    latency_std: float = Field(25.0, ge=0.0)
    failure_probability: float = Field(0.0, ge=0.0, le=1.0)
    virtual_clock: bool = True
    queue_wait_mean: float = Field(0.0, ge=0.0)
    workers: int = Field(0, ge=0)


class StudySettings(BaseModel):
    """実験ハーネス（非同期タイミング・インフィル比較）の設定"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    realizations: int = Field(50, ge=1)
    fractions: List[float] = Field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75, 1.0])
    iterations: int = Field(8, ge=1)
    latency_mean: float = Field(100.0, ge=0.0)
    latency_std: float = Field(25.0, ge=0.0)
    ks: List[int] = Field(default_factory=lambda: [1, 4, 8])
    workers: int = Field(1, ge=1)

    @field_validator("fractions")
    @classmethod
    def _check_fractions(cls, v: List[float]) -> List[float]:
        if any(not (0.0 <= f <= 1.0) for f in v):
            raise ValueError("fractions は [0, 1] の範囲で指定してください")
        return v


class RunConfig(BaseModel):
    """統合実行設定"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    run: RunSettings
    kernel: KernelSpec = Field(default_factory=KernelSpec)
    gp: GpSettings = Field(default_factory=GpSettings)
    acq: AcquisitionSettings = Field(default_factory=AcquisitionSettings)
    acqopt: AcqOptSettings = Field(default_factory=AcqOptSettings)
    hyper: HyperSettings = Field(default_factory=HyperSettings)
    evaluator: EvaluatorConfig = Field(default_factory=EvaluatorConfig)
    objective: ObjectiveSettings = Field(default_factory=ObjectiveSettings)
    study: StudySettings = Field(default_factory=StudySettings)

    @model_validator(mode="after")
    def _check_invariants(self) -> "RunConfig":
        run = self.run
        if not run.bounds:
            raise ValueError("run.bounds は 1 次元以上必要です")
        for low, high in run.bounds:
            if not (math.isfinite(low) and math.isfinite(high)) or low >= high:
                raise ValueError(f"run.bounds が不正です: ({low}, {high})")
        n_init = run.initial_design_size()
        if n_init < 1:
            raise ValueError("run.n_init は 1 以上である必要があります")
        if run.max_evals < n_init:
            raise ValueError(f"run.max_evals ({run.max_evals}) は n_init ({n_init}) 以上である必要があります")
        if len(self.kernel.length_scale) not in (1, run.dim):
            raise ValueError(
                f"kernel.length_scale の次元 {len(self.kernel.length_scale)} が bounds の次元 {run.dim} と一致しません"
            )
        kernel = self.kernel
        if kernel.family is KernelFamily.PIECEWISE_POLY_D0 and kernel.dim is not None and kernel.dim < run.dim:
            raise ValueError(f"kernel.dim ({kernel.dim}) は bounds の次元 {run.dim} 以上である必要があります")
        return self

    @property
    def dim(self) -> int:
        return self.run.dim


class AppSettings(BaseSettings):
    """プロセス全体の設定（環境変数・.env）"""

    model_config = SettingsConfigDict(env_prefix="ASYBO_", env_file=".env", case_sensitive=False, extra="ignore")

    log_level: str = "INFO"
    output_dir: str = "output"


# ----- フラットな key = value 形式 -----------------------------------------


def parse_value(raw: str) -> Any:
    """値を JSON として解釈し、できなければ文字列のまま返す"""
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_config_text(text: str, source: str = "<string>") -> Dict[str, Any]:
    """設定テキストを {dotted_key: value} に変換"""
    flat: Dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: 'key = value' 形式ではありません: {line.strip()}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: キーが空です")
        flat[key] = parse_value(raw)
    return flat


def parse_overrides(overrides: Iterable[str]) -> List[Tuple[str, Any]]:
    """コマンドラインの key=value 上書きを解析"""
    parsed = []
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"上書き指定は key=value 形式で指定してください: {item}")
        key, raw = (part.strip() for part in item.split("=", 1))
        parsed.append((key, parse_value(raw)))
    return parsed


def unflatten(flat: Dict[str, Any]) -> Dict[str, Dict[str, Any]]:
    """dotted key を セクション → フィールド の入れ子辞書に変換"""
    sections = set(RunConfig.model_fields)
    nested: Dict[str, Dict[str, Any]] = {}
    for key, value in flat.items():
        canonical = KEY_ALIASES.get(key, key)
        parts = canonical.split(".")
        if len(parts) != 2 or parts[0] not in sections:
            raise ConfigError(f"未知の設定キーです: {key}", key=key)
        nested.setdefault(parts[0], {})[parts[1]] = value
    return nested


def build_run_config(flat: Dict[str, Any]) -> RunConfig:
    """フラットな辞書から RunConfig を検証付きで構築"""
    nested = unflatten(flat)
    try:
        return RunConfig.model_validate(nested)
    except ValidationError as e:
        first = e.errors()[0]
        key = ".".join(str(part) for part in first["loc"])
        if first["type"] == "extra_forbidden":
            raise ConfigError(f"未知の設定キーです: {key}", key=key) from e
        if first["type"] == "missing":
            raise ConfigError(f"必須の設定キーがありません: {key}", key=key) from e
        raise ConfigError(f"{key or '設定'}: {first['msg']} (入力: {first.get('input')!r})", key=key or None) from e


def load_run_config(path: str, overrides: Iterable[str] = ()) -> RunConfig:
    """設定ファイルを読み込み、上書きを左から順に適用して検証"""
    config_path = Path(path)
    if not config_path.is_file():
        raise ConfigError(f"設定ファイルが見つかりません: {path}")
    flat = parse_config_text(config_path.read_text(encoding="utf-8"), source=str(config_path))
    applied = parse_overrides(overrides)
    for key, value in applied:
        flat[key] = value
    config = build_run_config(flat)
    logger.info(f"設定を読み込みました: {path} (上書き {len(applied)} 件)")
    return config


def flatten_config(config: RunConfig) -> Dict[str, str]:
    """実効設定を dotted key → JSON 文字列 に展開（サマリー出力用）"""
    flat: Dict[str, str] = {}
    for section, values in config.model_dump(mode="json").items():
        for field, value in values.items():
            flat[f"{section}.{field}"] = json.dumps(value)
    return flat


def config_hash(config: RunConfig) -> str:
    """設定の正規化 JSON の SHA-256（先頭 16 桁）"""
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def setup_logging(log_level: Optional[str] = None) -> None:
    """アプリケーション全体のロギング設定"""
    level = (log_level or AppSettings().log_level).upper()

    logging_config = {
        "version": 1,
        "disable_existing_loggers": False,
        "formatters": {
            "default": {
                "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
            },
        },
        "handlers": {
            "console": {
                "class": "logging.StreamHandler",
                "formatter": "default",
            },
        },
        "root": {
            "handlers": ["console"],
            "level": level,
        },
        "loggers": {
            "src": {"handlers": ["console"], "level": level, "propagate": False},
            "asybo": {"handlers": ["console"], "level": level, "propagate": False},
        },
    }

    logging.config.dictConfig(logging_config)
