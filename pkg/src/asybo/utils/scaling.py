"""
入力の単位超立方体への正規化と、出力（コスト値）の標準化
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from ..core.error_handler import InvalidArgumentError

# これ未満の標準偏差は 1 とみなす（定数値や 1 点だけのとき）
MIN_OUTPUT_STD = 1e-12


class BoxTransform:
    """探索領域の箱 ⇔ [0, 1]^d の線形変換"""

    def __init__(self, bounds: Sequence[Tuple[float, float]]):
        if not bounds:
            raise InvalidArgumentError("bounds が空です")
        self.lower = np.array([float(b[0]) for b in bounds])
        self.upper = np.array([float(b[1]) for b in bounds])
        if np.any(self.upper <= self.lower):
            raise InvalidArgumentError(f"bounds は low < high を満たす必要があります: {list(bounds)}")
        self.span = self.upper - self.lower

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def unit_bounds(self) -> Tuple[Tuple[float, float], ...]:
        return ((0.0, 1.0),) * self.dim

    def to_unit(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.lower) / self.span

    def from_unit(self, U) -> np.ndarray:
        return self.lower + np.clip(np.asarray(U, dtype=float), 0.0, 1.0) * self.span

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


@dataclass(frozen=True)
class OutputScaler:
    """コスト値の標準化 (y - mean) / std"""

    mean: float = 0.0
    std: float = 1.0

    @classmethod
    def fit(cls, y, enabled: bool = True) -> "OutputScaler":
        y = np.asarray(y, dtype=float)
        if not enabled or y.size == 0:
            return cls()
        std = float(np.std(y))
        return cls(mean=float(np.mean(y)), std=std if std > MIN_OUTPUT_STD else 1.0)

    def transform(self, y) -> np.ndarray:
        return (np.asarray(y, dtype=float) - self.mean) / self.std

    def inverse_mean(self, mu) -> np.ndarray:
        return np.asarray(mu, dtype=float) * self.std + self.mean

    def inverse_variance(self, var) -> np.ndarray:
        return np.asarray(var, dtype=float) * self.std**2
