"""
初期実験計画（ラテン超方格）と報告用グリッド
"""

import itertools
from typing import Sequence, Tuple

import numpy as np
from scipy.stats import qmc

from ..core.error_handler import InvalidArgumentError


def latin_hypercube(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """[0, 1]^dim 上の n 点ラテン超方格（各軸の n 分割それぞれに 1 点）"""
    if n < 1 or dim < 1:
        raise InvalidArgumentError(f"n と dim は 1 以上である必要があります: n={n}, dim={dim}")
    sampler = qmc.LatinHypercube(d=dim, seed=rng)
    return sampler.random(n)


def uniform_grid(bounds: Sequence[Tuple[float, float]], points_per_dim: int) -> np.ndarray:
    """各軸 points_per_dim 点の直積グリッド（行数 = points_per_dim^d）"""
    if points_per_dim < 2:
        raise InvalidArgumentError(f"points_per_dim は 2 以上である必要があります: {points_per_dim}")
    axes = [np.linspace(low, high, points_per_dim) for low, high in bounds]
    return np.array(list(itertools.product(*axes)), dtype=float)
