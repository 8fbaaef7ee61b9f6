"""
獲得関数（LCB / PI / EI）と κ スケジュール

すべて「小さいほど良い」最小化問題として定義する（PI と EI は符号反転）。
"""

import math
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.stats import norm

from ..core.error_handler import InvalidArgumentError
from ..surrogate.gp import Prediction


class AcquisitionFamily(str, Enum):
    """獲得関数の種類。EXPLORE はクリギング用の純粋探索（-σ）"""

    LCB = "LCB"
    PI = "PI"
    EI = "EI"
    EXPLORE = "EXPLORE"


class ScheduleKind(str, Enum):
    CONSTANT = "constant"
    ANNEALING = "annealing"


class KappaSchedule(BaseModel):
    """κ スケジュール: Constant(κ) または Annealing(κ₀, decay)"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: ScheduleKind = ScheduleKind.ANNEALING
    kappa0: float = Field(3.0, ge=0.0)
    decay: float = Field(0.95, gt=0.0, le=1.0)


class AcquisitionSpec(BaseModel):
    """獲得関数の定義。f_min はサロゲートと同じ単位での最良完了値"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    family: AcquisitionFamily = AcquisitionFamily.LCB
    schedule: KappaSchedule = Field(default_factory=KappaSchedule)
    kappa_max: float = Field(10.0, ge=0.0)
    f_min: float = math.inf


def expected_improvement(means, stds, f_min: float) -> np.ndarray:
    """標準形の期待改善量（符号反転前、σ = 0 では 0）"""
    means = np.asarray(means, dtype=float)
    stds = np.asarray(stds, dtype=float)
    out = np.zeros(np.broadcast(means, stds).shape)
    positive = stds > 0.0
    if np.any(positive):
        mu, sigma = np.broadcast_to(means, out.shape)[positive], np.broadcast_to(stds, out.shape)[positive]
        z = (f_min - mu) / sigma
        out[positive] = (f_min - mu) * norm.cdf(z) + sigma * norm.pdf(z)
    return out


def probability_of_improvement(means, stds, f_min: float) -> np.ndarray:
    """改善確率 Φ((f_min - μ)/σ)（符号反転前、σ = 0 では 0）"""
    means = np.asarray(means, dtype=float)
    stds = np.asarray(stds, dtype=float)
    out = np.zeros(np.broadcast(means, stds).shape)
    positive = stds > 0.0
    if np.any(positive):
        mu, sigma = np.broadcast_to(means, out.shape)[positive], np.broadcast_to(stds, out.shape)[positive]
        out[positive] = norm.cdf((f_min - mu) / sigma)
    return out


def acq_eval_many(spec: AcquisitionSpec, means, variances, kappa: float) -> np.ndarray:
    """複数点の獲得関数値（最小化向き）"""
    if kappa < 0:
        raise InvalidArgumentError(f"κ は 0 以上である必要があります: {kappa}")
    means = np.asarray(means, dtype=float)
    stds = np.sqrt(np.clip(np.asarray(variances, dtype=float), 0.0, None))

    if spec.family is AcquisitionFamily.LCB:
        return means - kappa * stds
    if spec.family is AcquisitionFamily.PI:
        return -probability_of_improvement(means, stds, spec.f_min) + 0.0
    if spec.family is AcquisitionFamily.EI:
        return -expected_improvement(means, stds, spec.f_min) + 0.0
    return -stds


def acq_eval(spec: AcquisitionSpec, pred: Prediction, kappa: float) -> float:
    """1 点の獲得関数値（最小化向き）"""
    if pred.variance < 0:
        raise InvalidArgumentError(f"分散が負です: {pred.variance}")
    return float(acq_eval_many(spec, [pred.mean], [pred.variance], kappa)[0])


def next_kappa(spec: AcquisitionSpec, iteration: int) -> float:
    """反復番号に対する κ（Annealing なら κ₀·decay^iteration）"""
    schedule = spec.schedule
    if schedule.kind is ScheduleKind.CONSTANT:
        return schedule.kappa0
    return schedule.kappa0 * schedule.decay ** max(iteration, 0)


def kappa_fan(kappa: float, k: int, kappa_max: float) -> list:
    """κ を中心とした幾何的な扇 {0.5, 1, 2, 4, ...}·κ（k = 1 なら κ のみ）"""
    if k == 1:
        return [min(max(kappa, 0.0), kappa_max)]
    return [min(max(kappa * 2.0 ** (i - 1), 0.0), kappa_max) for i in range(k)]
