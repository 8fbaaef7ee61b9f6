"""
定常（動径）共分散関数

k(x, x') = k(r),  r = ||(x - x') ⊘ l||  （長さスケール l で割ってから距離を取る）
"""

import logging
import math
from enum import Enum
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from scipy.spatial.distance import cdist

from ..core.error_handler import InvalidArgumentError

logger = logging.getLogger(__name__)


class KernelFamily(str, Enum):
    """カーネル関数の種類"""

    SQUARED_EXPONENTIAL = "SquaredExponential"
    MATERN32 = "Matern32"
    MATERN52 = "Matern52"
    EXPONENTIAL = "Exponential"
    GAMMA_EXPONENTIAL = "GammaExponential"
    RATIONAL_QUADRATIC = "RationalQuadratic"
    PIECEWISE_POLY_D0 = "PiecewisePolyD0"


class KernelSpec(BaseModel):
    """カーネルの種類とパラメータ（不変値）"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    family: KernelFamily = Field(KernelFamily.SQUARED_EXPONENTIAL, description="カーネル種別")
    length_scale: Tuple[float, ...] = Field((0.2,), description="長さスケール（1 要素なら等方）")
    gamma: float = Field(1.0, description="γ-exponential の指数 (0, 2]")
    alpha: float = Field(1.0, description="Rational Quadratic の α")
    dim: Optional[int] = Field(None, description="PiecewisePolyD0 の次元 D（None なら点の次元）")

    @field_validator("length_scale", mode="before")
    @classmethod
    def _coerce_length_scale(cls, v):
        if isinstance(v, (int, float)):
            return (float(v),)
        return tuple(v)

    @field_validator("length_scale")
    @classmethod
    def _check_length_scale(cls, v: Tuple[float, ...]) -> Tuple[float, ...]:
        if not v:
            raise ValueError("length_scale が空です")
        if any(not math.isfinite(s) or s <= 0.0 for s in v):
            raise ValueError(f"length_scale は全成分が正である必要があります: {v}")
        return v

    @field_validator("gamma")
    @classmethod
    def _check_gamma(cls, v: float) -> float:
        if not (0.0 < v <= 2.0):
            raise ValueError(f"gamma は (0, 2] の範囲で指定してください: {v}")
        return v

    @field_validator("alpha")
    @classmethod
    def _check_alpha(cls, v: float) -> float:
        if not v > 0.0:
            raise ValueError(f"alpha は正である必要があります: {v}")
        return v

    @field_validator("dim")
    @classmethod
    def _check_dim(cls, v: Optional[int]) -> Optional[int]:
        if v is not None and v < 1:
            raise ValueError(f"dim は 1 以上である必要があります: {v}")
        return v

    @property
    def is_isotropic(self) -> bool:
        return len(self.length_scale) == 1


# 各 radial form は l で割った後の r と点の次元 D を受け取る
def _squared_exponential(r: np.ndarray, spec: KernelSpec, dim: int) -> np.ndarray:
    return np.exp(-(r**2))


def _exponential(r: np.ndarray, spec: KernelSpec, dim: int) -> np.ndarray:
    return np.exp(-r)


def _gamma_exponential(r: np.ndarray, spec: KernelSpec, dim: int) -> np.ndarray:
    return np.exp(-(r**spec.gamma))


def _rational_quadratic(r: np.ndarray, spec: KernelSpec, dim: int) -> np.ndarray:
    return (1.0 + r**2 / (2.0 * spec.alpha)) ** (-spec.alpha)


def _matern32(r: np.ndarray, spec: KernelSpec, dim: int) -> np.ndarray:
    s = math.sqrt(3.0) * r
    return (1.0 + s) * np.exp(-s)


def _matern52(r: np.ndarray, spec: KernelSpec, dim: int) -> np.ndarray:
    s = math.sqrt(5.0) * r
    return (1.0 + s + 5.0 * r**2 / 3.0) * np.exp(-s)


def _piecewise_poly_d0(r: np.ndarray, spec: KernelSpec, dim: int) -> np.ndarray:
    # q = 0 固定
    j = dim // 2 + 1
    return np.clip(1.0 - r, 0.0, None) ** j


RADIAL_FORMS: Dict[KernelFamily, Callable[[np.ndarray, KernelSpec, int], np.ndarray]] = {
    KernelFamily.SQUARED_EXPONENTIAL: _squared_exponential,
    KernelFamily.MATERN32: _matern32,
    KernelFamily.MATERN52: _matern52,
    KernelFamily.EXPONENTIAL: _exponential,
    KernelFamily.GAMMA_EXPONENTIAL: _gamma_exponential,
    KernelFamily.RATIONAL_QUADRATIC: _rational_quadratic,
    KernelFamily.PIECEWISE_POLY_D0: _piecewise_poly_d0,
}


def _as_points(points, name: str) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr[np.newaxis, :]
    if arr.ndim != 2:
        raise InvalidArgumentError(f"{name} は点の 2 次元配列である必要があります: shape={arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} に有限でない座標が含まれています")
    return arr


def _scales_for(spec: KernelSpec, dim: int) -> np.ndarray:
    scales = np.asarray(spec.length_scale, dtype=float)
    if scales.size == 1:
        return np.full(dim, scales[0])
    if scales.size != dim:
        raise InvalidArgumentError(f"length_scale の次元 {scales.size} が点の次元 {dim} と一致しません")
    return scales


def scaled_distances(spec: KernelSpec, A, B=None) -> np.ndarray:
    """長さスケールで割った点間距離行列"""
    A = _as_points(A, "A")
    B = A if B is None else _as_points(B, "B")
    if A.shape[1] != B.shape[1]:
        raise InvalidArgumentError(f"点の次元が一致しません: {A.shape[1]} != {B.shape[1]}")
    scales = _scales_for(spec, A.shape[1])
    return cdist(A / scales, B / scales)


def radial_dimension(spec: KernelSpec, point_dim: int) -> int:
    """radial form に渡す次元。PiecewisePolyD0 は spec.dim 以下の次元でのみ正定値"""
    if spec.dim is None:
        return point_dim
    if spec.family is KernelFamily.PIECEWISE_POLY_D0 and point_dim > spec.dim:
        raise InvalidArgumentError(
            f"PiecewisePolyD0 の次元 D={spec.dim} が点の次元 {point_dim} より小さいため正定値になりません"
        )
    return spec.dim


def kernel_matrix(spec: KernelSpec, A, B=None) -> np.ndarray:
    """グラム行列（B 省略時）または相互共分散行列"""
    r = scaled_distances(spec, A, B)
    point_dim = np.shape(A)[-1]
    return RADIAL_FORMS[spec.family](r, spec, radial_dimension(spec, point_dim))


def kernel_eval(spec: KernelSpec, x: Sequence[float], x2: Sequence[float]) -> float:
    """2 点間のカーネル値 k(x, x2)"""
    a = np.asarray(x, dtype=float)
    b = np.asarray(x2, dtype=float)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise InvalidArgumentError(f"点の次元が一致しません: {a.shape} != {b.shape}")
    return float(kernel_matrix(spec, a, b)[0, 0])


def set_length_scale(spec: KernelSpec, length_scale: Union[float, Sequence[float]]) -> KernelSpec:
    """長さスケールだけを差し替えた新しい KernelSpec を返す"""
    try:
        return KernelSpec(**{**spec.model_dump(), "length_scale": length_scale})
    except ValidationError as e:
        raise InvalidArgumentError(f"長さスケールが不正です: {length_scale}") from e


def with_shared_scale(spec: KernelSpec, scale: float, dim: Optional[int] = None) -> KernelSpec:
    """全成分を同じ値にした長さスケールで置き換える（等方性は元の spec に従う）"""
    n = 1 if spec.is_isotropic else (dim or len(spec.length_scale))
    return set_length_scale(spec, (float(scale),) * n)
