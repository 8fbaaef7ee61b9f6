"""
有界・導関数不要のマルチスタート最小化

獲得関数の最小化と（対数空間での）長さスケール調整で共用する。
各スタートから座標を箱にクリップした Nelder-Mead を走らせ、
評価したうちの最良点を返す。
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.optimize import Bounds
from scipy.optimize import minimize as scipy_minimize
from scipy.stats import qmc

from ..core.error_handler import ObjectiveEvaluationError

logger = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], float]


class MinimizeSpec(BaseModel):
    """最小化の設定"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    bounds: Tuple[Tuple[float, float], ...]
    n_starts: int = Field(8, ge=1)
    max_evals: int = Field(2000, ge=1)
    tol: float = Field(1e-6, gt=0.0)
    seed: int = 0

    @model_validator(mode="after")
    def _check(self) -> "MinimizeSpec":
        if not self.bounds:
            raise ValueError("bounds が空です")
        for low, high in self.bounds:
            if not low < high:
                raise ValueError(f"bounds は low < high を満たす必要があります: ({low}, {high})")
        if self.max_evals < self.n_starts:
            raise ValueError(f"max_evals ({self.max_evals}) は n_starts ({self.n_starts}) 以上である必要があります")
        return self

    @property
    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.bounds], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.bounds], dtype=float)


@dataclass(frozen=True)
class MinimizeResult:
    """最小化の結果。candidates は各スタートの局所解（値の昇順）"""

    x: np.ndarray
    fun: float
    nfev: int
    candidates: Tuple[Tuple[np.ndarray, float], ...]


class _BudgetExhausted(Exception):
    """局所探索の評価回数の上限に達した"""


class _CountingObjective:
    """評価回数・最良点を記録し、箱へのクリップと有限性チェックを行う"""

    def __init__(self, f: Objective, lower: np.ndarray, upper: np.ndarray):
        self.f = f
        self.lower = lower
        self.upper = upper
        self.nfev = 0
        self.limit: Optional[int] = None
        self.best_x: Optional[np.ndarray] = None
        self.best_f = math.inf
        self.local_x: Optional[np.ndarray] = None
        self.local_f = math.inf

    def start_local(self, x0: np.ndarray, f0: float, budget: int) -> None:
        self.local_x, self.local_f = x0.copy(), f0
        self.limit = self.nfev + budget

    def __call__(self, x: np.ndarray) -> float:
        if self.limit is not None and self.nfev >= self.limit:
            raise _BudgetExhausted()
        x = np.clip(np.asarray(x, dtype=float), self.lower, self.upper)
        value = float(self.f(x))
        self.nfev += 1
        if not math.isfinite(value):
            raise ObjectiveEvaluationError(f"目的関数が有限でない値 {value} を返しました", point=x)
        if value < self.best_f:
            self.best_f = value
            self.best_x = x.copy()
        if value < self.local_f:
            self.local_f = value
            self.local_x = x.copy()
        return value


def start_points(spec: MinimizeSpec, extra: Optional[Sequence[Sequence[float]]] = None) -> np.ndarray:
    """空間充填（ラテン超方格）スタート点＋呼び出し側の追加スタート"""
    lower, upper = spec.lower, spec.upper
    sampler = qmc.LatinHypercube(d=len(spec.bounds), seed=spec.seed)
    points = qmc.scale(sampler.random(spec.n_starts), lower, upper)
    if extra is not None and len(extra):
        points = np.vstack([np.clip(np.asarray(extra, dtype=float), lower, upper), points])
    return points


def minimize(f: Objective, spec: MinimizeSpec, starts: Optional[Sequence[Sequence[float]]] = None) -> MinimizeResult:
    """
    箱制約付きマルチスタート Nelder-Mead で f を最小化

    すべてのスタート点を先に 1 回ずつ評価し、残りの予算を各スタートの
    局所探索（初期単体の評価を含む）に割り振る。評価回数は
    max(max_evals, スタート点数) を超えない。
    """
    lower, upper = spec.lower, spec.upper
    points = start_points(spec, starts)
    objective = _CountingObjective(f, lower, upper)
    bounds = Bounds(lower, upper)
    dim = len(spec.bounds)

    start_values = [objective(x0) for x0 in points]
    budget = max(spec.max_evals, len(points))
    per_start = (budget - len(points)) // len(points)

    candidates: List[Tuple[np.ndarray, float]] = []
    for x0, f0 in zip(points, start_values):
        local_budget = min(per_start, budget - objective.nfev)
        objective.start_local(x0, f0, local_budget)
        # 初期単体すら作れない予算なら局所探索を省く
        if local_budget >= dim + 1:
            try:
                scipy_minimize(
                    objective,
                    x0,
                    method="Nelder-Mead",
                    bounds=bounds,
                    options={
                        "maxfev": local_budget,
                        "xatol": spec.tol,
                        "fatol": spec.tol,
                        "adaptive": dim > 2,
                    },
                )
            except _BudgetExhausted:
                pass
        candidates.append((objective.local_x, objective.local_f))
    objective.limit = None

    candidates.sort(key=lambda item: item[1])
    logger.debug(f"最小化完了: f={objective.best_f:.6g} 評価回数={objective.nfev} スタート数={len(candidates)}")
    return MinimizeResult(
        x=objective.best_x,
        fun=objective.best_f,
        nfev=objective.nfev,
        candidates=tuple(candidates),
    )
