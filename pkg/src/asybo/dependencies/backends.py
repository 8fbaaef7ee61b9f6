# src/asybo/dependencies/backends.py

"""
評価バックエンドの依存性注入
"""

import importlib
import logging
from typing import Callable, Optional

import numpy as np

from ..bench.functions import KRIGING_FUNCTIONS, BenchmarkFn, BenchmarkName, get_benchmark
from ..core.config import RunConfig
from ..core.error_handler import ConfigError, InvalidArgumentError
from ..evaluation.backends.in_process import InProcessBackend
from ..evaluation.backends.remote import FakeScheduler, RemoteCommandBackend
from ..evaluation.backends.simulated import SimulatedLatencyBackend
from ..evaluation.backends.subprocess_backend import SubprocessBackend
from ..evaluation.clock import RealClock, VirtualClock
from ..protocols.backends import Clock, EvaluationBackend

logger = logging.getLogger(__name__)


def resolve_benchmark(name: str, dim: int) -> BenchmarkFn:
    """ベンチマーク関数を名前から解決（未知の名前は設定エラー）"""
    try:
        return get_benchmark(name, dim)
    except InvalidArgumentError as e:
        raise ConfigError(f"未知のベンチマーク関数です: {name}", key="objective.function") from e


def resolve_cost_function(name: str, dim: int) -> Callable[[np.ndarray], float]:
    """
    コスト関数を名前から解決

    ベンチマーク名（rastrigin 等）、クリギング用 1 次元関数名、
    または "package.module:function" 形式のインポートパスを受け付ける。
    """
    if name.lower() in {member.value for member in BenchmarkName}:
        return get_benchmark(name, dim).fn
    if name in KRIGING_FUNCTIONS:
        return KRIGING_FUNCTIONS[name]
    if ":" in name:
        module_name, _, attr = name.partition(":")
        try:
            return getattr(importlib.import_module(module_name), attr)
        except (ImportError, AttributeError) as e:
            raise ConfigError(f"コスト関数をインポートできません: {name}: {e}", key="objective.function") from e
    raise ConfigError(f"未知のコスト関数です: {name}", key="objective.function")


def create_clock(config: RunConfig) -> Clock:
    """シミュレーション系バックエンドで virtual_clock が有効なら仮想時計を使う"""
    objective = config.objective
    if objective.backend in ("simulated", "remote") and objective.virtual_clock:
        return VirtualClock()
    return RealClock()


def create_backend(config: RunConfig, clock: Clock, seed: Optional[int] = None) -> EvaluationBackend:
    """設定から評価バックエンドを生成"""
    objective = config.objective
    seed = config.run.seed if seed is None else seed

    if objective.backend == "subprocess":
        if not objective.command:
            raise ConfigError("subprocess バックエンドには objective.command が必要です", key="objective.command")
        backend: EvaluationBackend = SubprocessBackend(objective.command)
    else:
        fn = resolve_cost_function(objective.function, config.dim)
        if objective.backend == "inprocess":
            backend = InProcessBackend(fn, max_workers=objective.workers)
        elif objective.backend == "simulated":
            backend = SimulatedLatencyBackend(
                fn,
                clock,
                latency_mean=objective.latency_mean,
                latency_std=objective.latency_std,
                seed=seed,
                failure_probability=objective.failure_probability,
            )
        else:
            scheduler = FakeScheduler(
                fn,
                clock,
                run_time_mean=objective.latency_mean,
                run_time_std=objective.latency_std,
                queue_wait_mean=objective.queue_wait_mean,
                failure_probability=objective.failure_probability,
                seed=seed,
            )
            backend = RemoteCommandBackend(scheduler)

    logger.info(f"評価バックエンドを生成しました: {type(backend).__name__} (関数 {objective.function})")
    return backend
