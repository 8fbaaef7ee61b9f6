"""
ベンチマーク用コスト関数（任意次元）
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Tuple

import numpy as np

from ..core.error_handler import InvalidArgumentError


def rastrigin(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(10.0 * x.size + np.sum(np.square(x) - 10.0 * np.cos(2.0 * np.pi * x)))


def ackley(x, a: float = 20.0, b: float = 0.2, c: float = 2.0 * math.pi) -> float:
    x = np.asarray(x, dtype=float)
    n = x.size
    sum1 = np.sqrt(np.square(x).sum() / n)
    sum2 = np.cos(c * x).sum() / n
    return float(a + math.e - a * np.exp(-b * sum1) - np.exp(sum2))


def rosenbrock(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(100.0 * np.sum((x[1:] - x[:-1] ** 2) ** 2) + np.sum((1.0 - x[:-1]) ** 2))


def griewangk(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(1.0 + np.square(x).sum() / 4000.0 - np.prod(np.cos(x / np.sqrt(np.arange(1, x.size + 1)))))


class BenchmarkName(str, Enum):
    RASTRIGIN = "rastrigin"
    ACKLEY = "ackley"
    ROSENBROCK = "rosenbrock"
    GRIEWANGK = "griewangk"


# 関数, 1 次元あたりの領域, 最適点の座標値
_CATALOG: Dict[BenchmarkName, Tuple[Callable[[np.ndarray], float], Tuple[float, float], float]] = {
    BenchmarkName.RASTRIGIN: (rastrigin, (-12.0, 12.0), 0.0),
    BenchmarkName.ACKLEY: (ackley, (-32.768, 32.768), 0.0),
    BenchmarkName.ROSENBROCK: (rosenbrock, (-5.0, 10.0), 1.0),
    BenchmarkName.GRIEWANGK: (griewangk, (-600.0, 600.0), 0.0),
}


@dataclass(frozen=True)
class BenchmarkFn:
    """次元・領域・既知の最適解を持つベンチマーク関数"""

    name: BenchmarkName
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise InvalidArgumentError(f"dim は 1 以上である必要があります: {self.dim}")

    @property
    def fn(self) -> Callable[[np.ndarray], float]:
        return _CATALOG[self.name][0]

    @property
    def domain(self) -> Tuple[Tuple[float, float], ...]:
        return (_CATALOG[self.name][1],) * self.dim

    @property
    def true_optimum(self) -> Tuple[float, ...]:
        return (_CATALOG[self.name][2],) * self.dim

    @property
    def true_value(self) -> float:
        return 0.0

    def __call__(self, x) -> float:
        return bench_eval(self, x)


def get_benchmark(name: str, dim: int) -> BenchmarkFn:
    try:
        return BenchmarkFn(BenchmarkName(name.lower()), dim)
    except ValueError as e:
        raise InvalidArgumentError(f"未知のベンチマーク関数です: {name}") from e


def bench_eval(fn: BenchmarkFn, x) -> float:
    """領域内の点で関数値を計算"""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != fn.dim:
        raise InvalidArgumentError(f"{fn.name.value}: 次元が一致しません ({x.size} != {fn.dim})")
    low, high = _CATALOG[fn.name][1]
    if np.any(x < low) or np.any(x > high):
        raise InvalidArgumentError(f"{fn.name.value}: 領域 [{low}, {high}]^{fn.dim} の外の点です: {x.tolist()}")
    return fn.fn(x)


# ----- クリギング比較用の [0, 1] 上の 1 次元解析関数 -------------------------


def _scalar(x) -> float:
    return float(np.asarray(x, dtype=float).reshape(-1)[0])


def linear_1d(x) -> float:
    return _scalar(x) + 0.5


def quadratic_1d(x) -> float:
    return (_scalar(x) - 0.5) ** 2 + 1.0


def sine_quadratic_1d(x) -> float:
    t = _scalar(x)
    return math.sin(3.0 * t**2 + (t - 8.0) ** 2 + 1.0)


def sine_cubic_1d(x) -> float:
    t = _scalar(x)
    return math.sin(((t - 6.0) / 40.0) ** 2 + ((2.0 * t + 1.0) / 10.0) ** 3)


KRIGING_FUNCTIONS: Dict[str, Callable[[np.ndarray], float]] = {
    "linear": linear_1d,
    "quadratic": quadratic_1d,
    "sine_quadratic": sine_quadratic_1d,
    "sine_cubic": sine_cubic_1d,
}
