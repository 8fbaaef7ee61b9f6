"""
ガウス過程サロゲート

共分散行列 K + jitter·I の Cholesky 因子を保持し、新しい評価点は
ブロック行の追加（rank-k append）で取り込む。状態は不変で、
fit / extend は常に新しい GpState を返す。
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import cho_solve, lapack, solve_triangular
from scipy.spatial.distance import cdist, pdist, squareform

from ..core.error_handler import DuplicatePointError, FactorizationError, InvalidArgumentError
from .kernel import KernelSpec, kernel_matrix

logger = logging.getLogger(__name__)

DEFAULT_JITTER = 1e-10
DUPLICATE_TOLERANCE = 1e-12
NEGATIVE_VARIANCE_WARNING = -1e-8


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GpState:
    """サロゲートの状態（学習点・因子・重み）"""

    X: np.ndarray
    y: np.ndarray
    kernel: KernelSpec
    jitter: float
    chol: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class Prediction:
    """事後平均と分散（分散は 0 でクランプ済み、raw_variance はクランプ前）"""

    mean: float
    variance: float
    raw_variance: float

    @property
    def std(self) -> float:
        return float(np.sqrt(self.variance))


def _validate_training(X, y) -> Tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, np.newaxis]
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise InvalidArgumentError(f"X と y の件数が一致しません: {X.shape} / {y.shape}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise InvalidArgumentError("学習データに有限でない値が含まれています")
    return X, y


def _check_distinct(X: np.ndarray, offset: int = 0) -> None:
    if X.shape[0] < 2:
        return
    distances = squareform(pdist(X))
    np.fill_diagonal(distances, np.inf)
    i, j = np.unravel_index(np.argmin(distances), distances.shape)
    if distances[i, j] < DUPLICATE_TOLERANCE:
        raise DuplicatePointError(
            f"学習点 {offset + min(i, j)} と {offset + max(i, j)} が重複しています", indices=(offset + i, offset + j)
        )


def _cholesky(matrix: np.ndarray, offset: int = 0) -> np.ndarray:
    factor, info = lapack.dpotrf(matrix, lower=1, clean=1)
    if info > 0:
        pivot = offset + info - 1
        raise FactorizationError(f"Cholesky 分解に失敗しました（ピボット {pivot} が正でない）", pivot=pivot)
    if info < 0:
        raise InvalidArgumentError(f"dpotrf の引数 {-info} が不正です")
    return factor


def _build(X, y, kernel, jitter, chol) -> GpState:
    weights = cho_solve((chol, True), y)
    return GpState(
        X=_frozen(X), y=_frozen(y), kernel=kernel, jitter=float(jitter), chol=_frozen(chol), weights=_frozen(weights)
    )


def gp_fit(X, y, kernel: KernelSpec, jitter: float = DEFAULT_JITTER) -> GpState:
    """学習データから Cholesky 因子を一から計算してサロゲートを構築"""
    X, y = _validate_training(X, y)
    if X.shape[0] < 1:
        raise InvalidArgumentError("学習点が 1 点以上必要です")
    if jitter < 0:
        raise InvalidArgumentError(f"jitter は 0 以上である必要があります: {jitter}")
    _check_distinct(X)

    K = kernel_matrix(kernel, X) + jitter * np.eye(X.shape[0])
    chol = _cholesky(K)
    return _build(X, y, kernel, jitter, chol)


def gp_extend(state: GpState, X_new, y_new) -> GpState:
    """ブロック行を因子に追加して新しい点を取り込む（O(N²·k)）"""
    if len(y_new) == 0:
        return state
    X_new, y_new = _validate_training(X_new, y_new)
    if X_new.shape[1] != state.dim:
        raise InvalidArgumentError(f"点の次元が一致しません: {X_new.shape[1]} != {state.dim}")

    n = state.n
    _check_distinct(X_new, offset=n)
    cross = cdist(X_new, state.X)
    if cross.min() < DUPLICATE_TOLERANCE:
        i, j = np.unravel_index(np.argmin(cross), cross.shape)
        raise DuplicatePointError(f"追加点 {n + i} が既存の学習点 {j} と重複しています", indices=(j, n + i))

    k12 = kernel_matrix(state.kernel, state.X, X_new)
    k22 = kernel_matrix(state.kernel, X_new) + state.jitter * np.eye(X_new.shape[0])
    border = solve_triangular(state.chol, k12, lower=True, check_finite=False)
    corner = _cholesky(k22 - border.T @ border, offset=n)

    chol = np.zeros((n + X_new.shape[0], n + X_new.shape[0]))
    chol[:n, :n] = state.chol
    chol[n:, :n] = border.T
    chol[n:, n:] = corner
    return _build(np.vstack([state.X, X_new]), np.concatenate([state.y, y_new]), state.kernel, state.jitter, chol)


def gp_refit_targets(state: GpState, y) -> GpState:
    """因子はそのままに目的値だけを差し替えて重みを解き直す"""
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != state.n or not np.all(np.isfinite(y)):
        raise InvalidArgumentError(f"目的値の件数が学習点数と一致しません: {y.shape[0]} != {state.n}")
    return _build(state.X, y, state.kernel, state.jitter, state.chol)


def gp_predict_many(state: GpState, Xq) -> Tuple[np.ndarray, np.ndarray]:
    """複数点の事後平均と（クランプ済み）分散"""
    Xq = np.asarray(Xq, dtype=float)
    if Xq.ndim == 1:
        Xq = Xq[np.newaxis, :]
    if Xq.ndim != 2 or Xq.shape[1] != state.dim:
        raise InvalidArgumentError(f"予測点の次元が学習点と一致しません: {Xq.shape} / d={state.dim}")

    k = kernel_matrix(state.kernel, state.X, Xq)
    means = k.T @ state.weights
    v = solve_triangular(state.chol, k, lower=True, check_finite=False)
    prior = np.ones(Xq.shape[0])  # 全カーネルで k(x, x) = 1
    raw = prior - np.einsum("ij,ij->j", v, v)
    lowest = float(raw.min())
    if lowest < NEGATIVE_VARIANCE_WARNING:
        logger.warning(f"事後分散が負になりました（最小 {lowest:.3e}）。0 にクランプします")
    return means, np.clip(raw, 0.0, None)


def gp_predict(state: GpState, x: Sequence[float]) -> Prediction:
    """1 点の事後平均と分散"""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != state.dim:
        raise InvalidArgumentError(f"予測点の次元が学習点と一致しません: {x.shape} / d={state.dim}")
    k = kernel_matrix(state.kernel, state.X, x).reshape(-1)
    mean = float(k @ state.weights)
    v = solve_triangular(state.chol, k, lower=True, check_finite=False)
    raw = 1.0 - float(v @ v)
    return Prediction(mean=mean, variance=max(raw, 0.0), raw_variance=raw)


def best_training_point(state: GpState) -> Optional[np.ndarray]:
    """目的値が最小の学習点"""
    if state.n == 0:
        return None
    return np.array(state.X[int(np.argmin(state.y))])
