"""
複数インフィル点の選択

κ の扇ごとに獲得関数を最小化し、学習点・保留点・同一バッチ内の点と
重複しない k 点を返す。
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..core.error_handler import InvalidArgumentError
from ..surrogate.gp import GpState, best_training_point, gp_predict_many
from .functions import AcquisitionSpec, acq_eval_many, kappa_fan, next_kappa
from .minimizer import MinimizeSpec, minimize

logger = logging.getLogger(__name__)

MIN_SEPARATION = 1e-6


@dataclass(frozen=True)
class InfillBatch:
    """1 反復で提案する点と、それぞれの生成に使った κ"""

    points: Tuple[Tuple[float, ...], ...]
    kappas: Tuple[float, ...]

    def __len__(self) -> int:
        return len(self.points)


def _is_separated(x: np.ndarray, taken: List[np.ndarray]) -> bool:
    return all(np.linalg.norm(x - other) >= MIN_SEPARATION for other in taken)


def select_infill(
    state: GpState,
    spec: AcquisitionSpec,
    k: int,
    bounds: Sequence[Tuple[float, float]],
    iteration: int,
    seed: int = 0,
    n_starts: Optional[int] = None,
    max_evals: int = 2000,
    tol: float = 1e-6,
    exclude: Optional[Sequence[Sequence[float]]] = None,
) -> InfillBatch:
    """k 個のインフィル点を選ぶ（κ ごとに 1 回の獲得関数最小化）"""
    if k < 1:
        raise InvalidArgumentError(f"k は 1 以上である必要があります: {k}")
    bounds = tuple((float(low), float(high)) for low, high in bounds)
    dim = len(bounds)
    starts = n_starts if n_starts is not None else 8 * dim
    lower = np.array([b[0] for b in bounds])
    upper = np.array([b[1] for b in bounds])
    rng = np.random.default_rng(seed)

    taken: List[np.ndarray] = [np.asarray(x, dtype=float) for x in state.X]
    if exclude is not None:
        taken.extend(np.asarray(x, dtype=float) for x in exclude)
    incumbent = best_training_point(state)

    kappas = kappa_fan(next_kappa(spec, iteration), k, spec.kappa_max)
    points: List[Tuple[float, ...]] = []
    for i, kappa in enumerate(kappas):

        def objective(x: np.ndarray, kappa: float = kappa) -> float:
            means, variances = gp_predict_many(state, x)
            return float(acq_eval_many(spec, means, variances, kappa)[0])

        minimize_spec = MinimizeSpec(
            bounds=bounds, n_starts=starts, max_evals=max(max_evals, starts), tol=tol, seed=seed + i
        )
        result = minimize(objective, minimize_spec, starts=None if incumbent is None else [incumbent])

        chosen = None
        for candidate in [result.x] + [x for x, _ in result.candidates]:
            if _is_separated(candidate, taken):
                chosen = candidate
                break
        if chosen is None:
            chosen = rng.uniform(lower, upper)
            logger.info(f"κ={kappa:.3g} の候補がすべて重複したため一様乱数点で置き換えます")

        taken.append(chosen)
        points.append(tuple(float(v) for v in chosen))

    logger.debug(f"インフィル点を {len(points)} 点選択しました (κ={kappas})")
    return InfillBatch(points=tuple(points), kappas=tuple(kappas))
