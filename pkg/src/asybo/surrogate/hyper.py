"""
MLE によるモデル品質指標と長さスケール調整

MLE = log(yᵀK⁻¹y) + (1/N)·log det(K)
log det は Cholesky 因子の対角から求め、行列式は直接計算しない。
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..acquisition.minimizer import MinimizeSpec, minimize
from ..core.error_handler import FactorizationError, InvalidArgumentError, NumericalDomainError
from .gp import DEFAULT_JITTER, gp_fit
from .kernel import KernelSpec, set_length_scale, with_shared_scale

logger = logging.getLogger(__name__)

# 因子分解に失敗した候補に与える値（最小化器は有限値を要求する）
FAILED_CANDIDATE_PENALTY = 1e300


@dataclass(frozen=True)
class MleReport:
    """MLE 指標とその内訳"""

    value: float
    fit_term: float
    complexity_term: float
    length_scale: Tuple[float, ...]


def mle_objective(X, y, kernel: KernelSpec, jitter: float = DEFAULT_JITTER) -> MleReport:
    """MLE 指標を計算"""
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] < 2:
        raise InvalidArgumentError(f"MLE には 2 点以上必要です: N={y.shape[0]}")
    if not np.any(y != 0.0):
        raise InvalidArgumentError("y がすべて 0 のため log(yᵀK⁻¹y) が定義できません")

    state = gp_fit(X, y, kernel, jitter)
    quad = float(y @ state.weights)
    if not (math.isfinite(quad) and quad > 0.0):
        raise NumericalDomainError(f"yᵀK⁻¹y が正でありません ({quad})。条件数が悪化しています")

    n = y.shape[0]
    fit_term = math.log(quad)
    complexity_term = 2.0 * float(np.sum(np.log(np.diag(state.chol)))) / n
    return MleReport(
        value=fit_term + complexity_term,
        fit_term=fit_term,
        complexity_term=complexity_term,
        length_scale=kernel.length_scale,
    )


def _safe_value(X, y, kernel: KernelSpec, jitter: float) -> float:
    try:
        return mle_objective(X, y, kernel, jitter).value
    except (FactorizationError, NumericalDomainError) as e:
        logger.debug(f"長さスケール {kernel.length_scale} の MLE 評価をスキップしました: {e}")
        return FAILED_CANDIDATE_PENALTY


def tune_length_scale(
    X,
    y,
    kernel: KernelSpec,
    bounds: Tuple[float, float] = (1e-2, 1e1),
    budget: int = 40,
    jitter: float = DEFAULT_JITTER,
    gate_n: Optional[int] = None,
    grid_points: int = 16,
    seed: int = 0,
) -> KernelSpec:
    """MLE を最小化する長さスケールを探す（対数グリッド → 局所改良）"""
    if budget < 1:
        raise InvalidArgumentError(f"budget は 1 以上である必要があります: {budget}")
    low, high = bounds
    if not (0.0 < low < high):
        raise InvalidArgumentError(f"長さスケールの探索範囲が不正です: {bounds}")

    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, np.newaxis]
    n, dim = X.shape
    gate = gate_n if gate_n is not None else max(5, 2 * dim)
    if n < gate:
        logger.debug(f"評価点数 {n} がゲート {gate} 未満のため長さスケール調整をスキップします")
        return kernel

    best_spec = kernel
    best_value = _safe_value(X, y, kernel, jitter)
    used = 1

    n_grid = min(grid_points, budget - used)
    for scale in np.geomspace(low, high, n_grid) if n_grid > 0 else []:
        candidate = with_shared_scale(kernel, float(scale), dim)
        value = _safe_value(X, y, candidate, jitter)
        used += 1
        if value < best_value:
            best_spec, best_value = candidate, value

    remaining = budget - used
    if remaining >= 2:
        n_scales = len(best_spec.length_scale)
        log_bounds = ((math.log(low), math.log(high)),) * n_scales
        start = np.clip(np.log(np.asarray(best_spec.length_scale)), math.log(low), math.log(high))

        def objective(log_scale: np.ndarray) -> float:
            return _safe_value(X, y, set_length_scale(kernel, tuple(np.exp(log_scale))), jitter)

        result = minimize(
            objective,
            MinimizeSpec(bounds=log_bounds, n_starts=1, max_evals=remaining, tol=1e-4, seed=seed),
            starts=[start],
        )
        if result.fun < best_value:
            best_spec = set_length_scale(kernel, tuple(float(v) for v in np.exp(result.x)))
            best_value = result.fun

    logger.info(f"長さスケールを調整しました: {kernel.length_scale} → {best_spec.length_scale} (MLE={best_value:.6g})")
    return best_spec
