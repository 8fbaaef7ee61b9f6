"""
実験ハーネス

- 非同期タイミング実験: ブロッキング率ごとの総完了時間（仮想時計）
- インフィル点数比較: k ごとの評価位置と最良値の推移
- クリギング比較: MLE 調整あり／なし／等間隔サンプリングの事後平均 RMSE
"""

import concurrent.futures
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..core.config import RunConfig, RunMode
from ..core.optimizer import BayesianOptimizer, krige
from ..evaluation.backends.in_process import InProcessBackend
from ..evaluation.backends.simulated import SimulatedLatencyBackend
from ..evaluation.clock import VirtualClock
from ..evaluation.models import EvaluationRecord, EvaluationStatus
from ..surrogate.gp import gp_fit, gp_predict_many
from ..surrogate.hyper import tune_length_scale
from ..utils.design import uniform_grid
from ..utils.scaling import OutputScaler
from .functions import KRIGING_FUNCTIONS, BenchmarkFn

logger = logging.getLogger(__name__)


def _with(config: RunConfig, **sections: Dict[str, object]) -> RunConfig:
    """セクション単位の上書きを適用した RunConfig を作る"""
    updates = {name: getattr(config, name).model_copy(update=values) for name, values in sections.items()}
    return config.model_copy(update=updates)


# ----- 非同期タイミング実験 --------------------------------------------------


class TimingStudyConfig(BaseModel):
    """タイミング実験の設定（時間の単位は仮想時計の単位）"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    latency_mean: float = Field(100.0, ge=0.0)
    latency_std: float = Field(25.0, ge=0.0)
    realizations: int = Field(50, ge=1)
    fractions: Tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    batch_k: int = Field(4, ge=1)
    iterations: int = Field(8, ge=1)
    max_simultaneous: int = Field(4, ge=1)
    poll_interval: float = Field(1.0, gt=0.0)
    seed: int = 0
    workers: int = Field(1, ge=1)

    @field_validator("fractions")
    @classmethod
    def _check_fractions(cls, v: Tuple[float, ...]) -> Tuple[float, ...]:
        if not v or any(not (0.0 <= f <= 1.0) for f in v):
            raise ValueError("fractions は [0, 1] の値を 1 つ以上指定してください")
        return v

    @property
    def max_evals(self) -> int:
        return self.iterations * self.batch_k

    @classmethod
    def from_run_config(cls, config: RunConfig) -> "TimingStudyConfig":
        study = config.study
        return cls(
            latency_mean=study.latency_mean,
            latency_std=study.latency_std,
            realizations=study.realizations,
            fractions=tuple(study.fractions),
            batch_k=config.acq.batch_k,
            iterations=study.iterations,
            max_simultaneous=config.evaluator.max_simultaneous,
            seed=config.run.seed,
            workers=study.workers,
        )


@dataclass(frozen=True)
class FractionStats:
    fraction: float
    mean: float
    std: float
    min: float
    max: float


@dataclass(frozen=True)
class TimingStudyResult:
    rows: Tuple[Tuple[float, int, float], ...]
    summary: Tuple[FractionStats, ...]

    def mean_for(self, fraction: float) -> float:
        return next(stats.mean for stats in self.summary if stats.fraction == fraction)


def timing_run_config(base: RunConfig, study: TimingStudyConfig, fraction: float, seed: int) -> RunConfig:
    return _with(
        base,
        run={
            "n_init": study.batch_k,
            "max_evals": study.max_evals,
            "seed": seed,
            "drain_pending": True,
            "checkpoint_path": None,
            "mode": RunMode.OPTIMIZE,
        },
        acq={"batch_k": study.batch_k},
        evaluator={
            "max_simultaneous": study.max_simultaneous,
            "blocking_fraction": fraction,
            "poll_interval_ms": study.poll_interval * 1000.0,
        },
        acqopt={"n_starts": 4, "max_evals": 200},
        hyper={"budget": min(base.hyper.budget, 8), "grid_points": min(base.hyper.grid_points, 6)},
    )


def timing_realization(
    base: RunConfig, study: TimingStudyConfig, fn: Callable[[np.ndarray], float], fraction: float, realization: int
) -> float:
    """1 回分の実験を仮想時計で実行し、最後の評価が確定した時刻を返す"""
    seed = study.seed + realization
    config = timing_run_config(base, study, fraction, seed)
    clock = VirtualClock()
    backend = SimulatedLatencyBackend(fn, clock, study.latency_mean, study.latency_std, seed=seed)
    state = BayesianOptimizer(config, backend, clock=clock).run()
    return total_completion_time(state.history, clock.now())


def total_completion_time(history: Sequence[EvaluationRecord], fallback: float) -> float:
    """履歴中で最も遅い確定時刻（確定した評価がなければ fallback）"""
    times = [r.complete_time for r in history if r.complete_time is not None]
    return float(max(times)) if times else float(fallback)


def summarize_times(rows: Sequence[Tuple[float, int, float]], fractions: Sequence[float]) -> Tuple[FractionStats, ...]:
    summary = []
    for fraction in fractions:
        times = np.array([t for f, _, t in rows if f == fraction])
        summary.append(
            FractionStats(
                fraction=fraction,
                mean=float(times.mean()),
                std=float(times.std()),
                min=float(times.min()),
                max=float(times.max()),
            )
        )
    return tuple(summary)


def run_timing_study(
    study: TimingStudyConfig, base: RunConfig, fn: Callable[[np.ndarray], float]
) -> TimingStudyResult:
    """ブロッキング率ごとに総完了時間の統計を求める"""
    tasks = [(fraction, r) for fraction in study.fractions for r in range(study.realizations)]
    logger.info(f"タイミング実験を開始します: 割合 {list(study.fractions)} × {study.realizations} 回")

    if study.workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=study.workers) as executor:
            futures = {
                executor.submit(timing_realization, base, study, fn, fraction, r): (fraction, r) for fraction, r in tasks
            }
            results = {futures[future]: future.result() for future in concurrent.futures.as_completed(futures)}
    else:
        results = {(fraction, r): timing_realization(base, study, fn, fraction, r) for fraction, r in tasks}

    rows = tuple((fraction, r, results[(fraction, r)]) for fraction, r in tasks)
    summary = summarize_times(rows, study.fractions)
    for stats in summary:
        logger.info(f"ブロッキング率 {stats.fraction}: 平均 {stats.mean:.2f} 標準偏差 {stats.std:.2f}")
    return TimingStudyResult(rows=rows, summary=summary)


# ----- インフィル点数比較 ----------------------------------------------------


@dataclass(frozen=True)
class InfillTrajectory:
    """1 つの k についての評価位置と最良値の推移（完了順）"""

    k: int
    records: Tuple[EvaluationRecord, ...]
    best_so_far: Tuple[float, ...]

    def rows(self) -> List[Tuple]:
        return [
            (self.k, record.iteration, *record.x, record.value, best)
            for record, best in zip(self.records, self.best_so_far)
        ]


def best_so_far(values: Sequence[float]) -> Tuple[float, ...]:
    return tuple(float(v) for v in np.minimum.accumulate(np.asarray(values, dtype=float))) if len(values) else ()


def run_infill_study(
    fn: BenchmarkFn, ks: Sequence[int], budget: int, seed: int, base: RunConfig
) -> List[InfillTrajectory]:
    """k ごとに同じ予算・同じシードで最適化を実行"""
    if not ks:
        raise ValueError("ks が空です")
    trajectories = []
    for k in ks:
        config = _with(
            base,
            run={
                "bounds": [list(b) for b in fn.domain],
                "max_evals": budget,
                "seed": seed,
                "checkpoint_path": None,
                "mode": RunMode.OPTIMIZE,
            },
            acq={"batch_k": k},
            evaluator={"blocking_fraction": 1.0},
        )
        with InProcessBackend(fn.fn) as backend:
            state = BayesianOptimizer(config, backend).run()
        completed = [r for r in state.history if r.status is EvaluationStatus.COMPLETED]
        trajectory = InfillTrajectory(
            k=k, records=tuple(completed), best_so_far=best_so_far([r.value for r in completed])
        )
        logger.info(f"インフィル {k} 点: 評価 {len(completed)} 件、最良値 {trajectory.best_so_far[-1]:.6g}")
        trajectories.append(trajectory)
    return trajectories


def infill_header(dim: int) -> List[str]:
    return ["k", "iteration", *[f"x{i + 1}" for i in range(dim)], "value", "best_so_far"]


# ----- クリギング比較 --------------------------------------------------------


@dataclass(frozen=True)
class KrigingComparison:
    function: str
    seed: int
    rmse_mle: float
    rmse_fixed: float
    rmse_uniform: float


def grid_rmse(predicted: np.ndarray, fn: Callable[[np.ndarray], float], grid: np.ndarray) -> float:
    truth = np.array([fn(x) for x in grid])
    return float(np.sqrt(np.mean((np.asarray(predicted) - truth) ** 2)))


def _uniform_baseline(config: RunConfig, fn: Callable[[np.ndarray], float], budget: int, grid: np.ndarray) -> float:
    low, high = config.run.bounds[0]
    X = np.linspace(0.0, 1.0, budget)[:, np.newaxis]
    y = np.array([fn(low + x * (high - low)) for x in X])
    scaler = OutputScaler.fit(y, enabled=config.gp.normalize_y)
    y_std = scaler.transform(y)
    kernel = config.kernel
    if config.hyper.enabled and np.any(y_std != 0.0):
        kernel = tune_length_scale(
            X,
            y_std,
            kernel,
            bounds=config.hyper.scale_bounds,
            budget=config.hyper.budget,
            jitter=config.gp.jitter,
            gate_n=config.hyper.gate_n,
            grid_points=config.hyper.grid_points,
            seed=config.run.seed,
        )
    gp = gp_fit(X, y_std, kernel, config.gp.jitter)
    means, _ = gp_predict_many(gp, (grid - low) / (high - low))
    return grid_rmse(scaler.inverse_mean(means), fn, grid)


def run_kriging_study(
    base: RunConfig,
    budget: int = 10,
    seeds: Sequence[int] = (0, 1, 2),
    functions: Optional[Dict[str, Callable[[np.ndarray], float]]] = None,
) -> List[KrigingComparison]:
    """予算付きクリギングを MLE あり／なし／等間隔で比較"""
    functions = functions or KRIGING_FUNCTIONS
    comparisons = []
    for name, fn in functions.items():
        for seed in seeds:
            config = _with(
                base,
                run={
                    "bounds": [[0.0, 1.0]],
                    "mode": RunMode.KRIGE,
                    "max_evals": budget,
                    "n_init": min(base.run.initial_design_size(), budget),
                    "seed": seed,
                    "checkpoint_path": None,
                },
                evaluator={"blocking_fraction": 1.0},
            )
            grid = uniform_grid(config.run.bounds, config.run.grid_size)
            rmse = {}
            for enabled in (True, False):
                variant = _with(config, hyper={"enabled": enabled})
                with InProcessBackend(fn) as backend:
                    report = krige(variant, backend)
                rmse[enabled] = grid_rmse(report.means(), fn, grid)
            comparison = KrigingComparison(
                function=name,
                seed=seed,
                rmse_mle=rmse[True],
                rmse_fixed=rmse[False],
                rmse_uniform=_uniform_baseline(_with(config, hyper={"enabled": True}), fn, budget, grid),
            )
            logger.info(
                f"クリギング {name} (seed {seed}): MLE {comparison.rmse_mle:.3e} / 固定 {comparison.rmse_fixed:.3e} / "
                f"等間隔 {comparison.rmse_uniform:.3e}"
            )
            comparisons.append(comparison)
    return comparisons
