"""
BayesianOptimizer: ベイズ最適化のメインループ

設計:
- 初期計画 → 評価 → 取り込み → ハイパーパラメータ調整 → インフィル選択 → 繰り返し
- サロゲートは [0, 1]^d に正規化した入力と標準化したコスト値で構築
- 1 回の評価呼び出しで完了した点は 1 ブロックとして因子に追加
- チェックポイントからの再開時は fit / extend / refit を同じ順に再生して
  サロゲートを復元する（再開後の軌跡が中断なしの実行と一致する）
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..acquisition.functions import AcquisitionFamily, AcquisitionSpec
from ..acquisition.infill import select_infill
from ..evaluation.clock import RealClock
from ..evaluation.evaluator import AsyncEvaluator
from ..evaluation.models import EvaluationRecord, EvaluationStatus, EvaluatorReport
from ..protocols.backends import Clock, EvaluationBackend
from ..surrogate.gp import GpState, gp_extend, gp_fit, gp_predict_many, gp_refit_targets
from ..surrogate.hyper import tune_length_scale
from ..surrogate.kernel import KernelSpec, set_length_scale
from ..utils.design import latin_hypercube, uniform_grid
from ..utils.scaling import BoxTransform, OutputScaler
from .checkpoint import CheckpointData, read_checkpoint, write_checkpoint
from .config import RunConfig, RunMode
from .error_handler import DuplicatePointError, FactorizationError, InvalidArgumentError, OptimizationError

logger = logging.getLogger(__name__)


class SurrogateTracker:
    """サロゲートの構築履歴（ブロック追加と長さスケール再設定）を管理する"""

    def __init__(self, kernel: KernelSpec, jitter: float, normalize_y: bool):
        self.kernel = kernel
        self.jitter = jitter
        self.normalize_y = normalize_y
        self.gp: Optional[GpState] = None
        self.scaler = OutputScaler()
        self.blocks = 0
        self.refits: List[Tuple[int, Tuple[float, ...]]] = []
        self._y_raw: List[float] = []

    def add_block(self, X_unit: np.ndarray, y_raw: Sequence[float]) -> int:
        """完了点を 1 ブロックとして取り込み、ブロック番号を返す"""
        k = len(y_raw)
        self._y_raw.extend(float(v) for v in y_raw)
        self.scaler = OutputScaler.fit(self._y_raw, enabled=self.normalize_y)
        y_all = self.scaler.transform(self._y_raw)
        if self.gp is None:
            self.gp = gp_fit(X_unit, y_all, self.kernel, self.jitter)
        else:
            self.gp = gp_extend(self.gp, X_unit, y_all[-k:])
            self.gp = gp_refit_targets(self.gp, y_all)
        block = self.blocks
        self.blocks += 1
        return block

    def refit(self, kernel: KernelSpec) -> None:
        """長さスケールを差し替えて因子を一から計算し直す"""
        self.kernel = kernel
        self.refits.append((self.blocks, kernel.length_scale))
        if self.gp is not None:
            self.gp = gp_fit(self.gp.X, self.gp.y, kernel, self.jitter)

    @classmethod
    def replay(
        cls,
        history: Sequence[EvaluationRecord],
        transform: BoxTransform,
        config: RunConfig,
        refits: Sequence[Tuple[int, Tuple[float, ...]]],
    ) -> "SurrogateTracker":
        """記録されたブロックと再設定を同じ順序で適用してサロゲートを再構築"""
        tracker = cls(config.kernel, config.gp.jitter, config.gp.normalize_y)
        blocks: Dict[int, List[EvaluationRecord]] = {}
        for record in history:
            if record.status is EvaluationStatus.COMPLETED:
                if record.block is None:
                    raise InvalidArgumentError(f"完了レコード {record.id} にブロック番号がありません")
                blocks.setdefault(record.block, []).append(record)
        if sorted(blocks) != list(range(len(blocks))):
            raise InvalidArgumentError(f"ブロック番号が連続していません: {sorted(blocks)}")

        events = sorted(refits, key=lambda event: event[0])
        cursor = 0
        for block in range(len(blocks)):
            while cursor < len(events) and events[cursor][0] == block:
                tracker.refit(set_length_scale(tracker.kernel, events[cursor][1]))
                cursor += 1
            members = blocks[block]
            tracker.add_block(transform.to_unit([r.x for r in members]), [r.value for r in members])
        while cursor < len(events):
            tracker.refit(set_length_scale(tracker.kernel, events[cursor][1]))
            cursor += 1
        return tracker


@dataclass
class IterationSummary:
    """1 反復分の集計（保留・完了の推移をプロットするためのデータ）"""

    iteration: int
    time: float
    completed: int
    pending: int
    failed: int
    best_value: Optional[float]
    kappas: Tuple[float, ...] = ()


@dataclass
class RunState:
    """最適化ループが所有する実行状態"""

    gp: Optional[GpState]
    history: List[EvaluationRecord]
    pending: List[EvaluationRecord]
    iteration: int
    rng_state: Dict[str, Any]
    best: Optional[Tuple[Tuple[float, ...], float]]
    submitted: int = 0
    next_id: int = 0
    kernel: Optional[KernelSpec] = None
    trace: List[IterationSummary] = field(default_factory=list)
    loop_end_time: Optional[float] = None

    @property
    def completed(self) -> List[EvaluationRecord]:
        return [r for r in self.history if r.status is EvaluationStatus.COMPLETED]

    @property
    def failed(self) -> List[EvaluationRecord]:
        return [r for r in self.history if r.status is EvaluationStatus.FAILED]

    def all_records(self) -> List[EvaluationRecord]:
        return list(self.history) + list(self.pending)


@dataclass(frozen=True)
class KrigingReport:
    """クリギング結果: グリッド上の事後平均と分散（元の単位）"""

    rows: Tuple[Tuple[Tuple[float, ...], float, float], ...]
    state: RunState

    def means(self) -> np.ndarray:
        return np.array([row[1] for row in self.rows])

    def variances(self) -> np.ndarray:
        return np.array([row[2] for row in self.rows])

    def points(self) -> np.ndarray:
        return np.array([row[0] for row in self.rows])


def _best_of(records: Sequence[EvaluationRecord]) -> Optional[Tuple[Tuple[float, ...], float]]:
    best = None
    for record in records:
        if record.status is EvaluationStatus.COMPLETED and (best is None or record.value < best[1]):
            best = (record.x, record.value)
    return best


class BayesianOptimizer:
    """
    ベイズ最適化ドライバー

    役割:
    - 初期計画（ラテン超方格）の評価
    - 完了点のサロゲートへの取り込みと長さスケール調整
    - インフィル点の選択と非同期評価器への投入
    - チェックポイントの定期書き出しと再開
    """

    def __init__(
        self,
        config: RunConfig,
        backend: EvaluationBackend,
        clock: Optional[Clock] = None,
        evaluator: Optional[AsyncEvaluator] = None,
    ):
        self.config = config
        self.backend = backend
        self.clock = clock or RealClock()
        self.transform = BoxTransform(config.run.bounds)
        self.evaluator = evaluator or AsyncEvaluator(config.evaluator, backend, self.clock)
        self.tracker = SurrogateTracker(config.kernel, config.gp.jitter, config.gp.normalize_y)
        self._rng = np.random.default_rng(config.run.seed)
        self.state: Optional[RunState] = None

    # ----- 再開 ---------------------------------------------------------------

    @classmethod
    def from_checkpoint(
        cls, path: str, backend: EvaluationBackend, clock: Optional[Clock] = None
    ) -> "BayesianOptimizer":
        """チェックポイントファイルから最適化器を復元"""
        return cls.restore(read_checkpoint(path), backend, clock)

    @classmethod
    def restore(
        cls, data: CheckpointData, backend: EvaluationBackend, clock: Optional[Clock] = None
    ) -> "BayesianOptimizer":
        """読み込み済みのチェックポイントから最適化器を復元"""
        clock = clock or RealClock()
        evaluator = AsyncEvaluator(data.config.evaluator, backend, clock, start_counter=data.next_id)
        optimizer = cls(data.config, backend, clock=clock, evaluator=evaluator)
        try:
            optimizer.tracker = SurrogateTracker.replay(
                data.history, optimizer.transform, data.config, data.refits
            )
        except (FactorizationError, DuplicatePointError, InvalidArgumentError) as e:
            raise OptimizationError(f"チェックポイントからサロゲートを再構築できません: {e}") from e
        if optimizer.tracker.kernel.length_scale != data.kernel.length_scale:
            raise OptimizationError(
                f"再構築した長さスケール {optimizer.tracker.kernel.length_scale} が記録 {data.kernel.length_scale} と一致しません"
            )
        optimizer._rng.bit_generator.state = data.rng_state
        optimizer.state = RunState(
            gp=optimizer.tracker.gp,
            history=list(data.history),
            pending=list(data.pending),
            iteration=data.iteration,
            rng_state=data.rng_state,
            best=_best_of(data.history),
            submitted=data.submitted,
            next_id=data.next_id,
            kernel=optimizer.tracker.kernel,
        )
        logger.info(
            f"反復 {data.iteration} から再開します（評価済み {len(data.history)} 件、保留 {len(data.pending)} 件）"
        )
        return optimizer

    # ----- チェックポイント ---------------------------------------------------

    def _sync_state(self) -> None:
        state = self.state
        state.gp = self.tracker.gp
        state.kernel = self.tracker.kernel
        state.rng_state = self._rng.bit_generator.state
        state.next_id = self.evaluator.next_counter

    def checkpoint_data(self) -> CheckpointData:
        self._sync_state()
        state = self.state
        return CheckpointData(
            config=self.config,
            history=tuple(state.history),
            pending=tuple(state.pending),
            kernel=self.tracker.kernel,
            refits=tuple(self.tracker.refits),
            rng_state=state.rng_state,
            iteration=state.iteration,
            next_id=state.next_id,
            submitted=state.submitted,
        )

    def _checkpoint(self) -> None:
        path = self.config.run.checkpoint_path
        if path:
            write_checkpoint(self.checkpoint_data(), path)

    # ----- ループ本体 ---------------------------------------------------------

    def _acquisition_spec(self) -> AcquisitionSpec:
        f_min = float(np.min(self.tracker.gp.y)) if self.tracker.gp is not None else math.inf
        spec = self.config.acq.to_spec(f_min)
        if self.config.run.mode is RunMode.KRIGE:
            spec = spec.model_copy(update={"family": AcquisitionFamily.EXPLORE})
        return spec

    def _absorb(self, report: EvaluatorReport, iteration: int, kappas: Tuple[float, ...] = ()) -> None:
        """評価結果を履歴とサロゲートに反映"""
        state = self.state
        completed = list(report.completed)
        if completed:
            X_unit = self.transform.to_unit([r.x for r in completed])
            block = self.tracker.add_block(X_unit, [r.value for r in completed])
            completed = [r.model_copy(update={"block": block}) for r in completed]
        for record in report.failed:
            logger.warning(f"評価 {record.id} は失敗のためサロゲートに取り込みません: {record.reason}")
        state.history.extend(completed)
        state.history.extend(report.failed)
        state.pending = list(report.pending)

        candidate = _best_of(completed)
        if candidate is not None and (state.best is None or candidate[1] < state.best[1]):
            state.best = candidate
        state.gp = self.tracker.gp
        state.trace.append(
            IterationSummary(
                iteration=iteration,
                time=self.clock.now(),
                completed=len(completed),
                pending=len(report.pending),
                failed=len(report.failed),
                best_value=None if state.best is None else state.best[1],
                kappas=kappas,
            )
        )

    def _initial_design(self) -> None:
        n_init = self.config.run.initial_design_size()
        unit_points = latin_hypercube(n_init, self.config.dim, self._rng)
        points = self.transform.from_unit(unit_points)
        logger.info(f"初期計画 {n_init} 点を評価します")
        self.state = RunState(
            gp=None, history=[], pending=[], iteration=0, rng_state=self._rng.bit_generator.state, best=None
        )
        report = self.evaluator.evaluate(points, [], blocking_fraction=1.0, iteration=0)
        self.state.submitted = n_init
        self._absorb(report, iteration=0)
        self._checkpoint()

    def _maybe_tune(self, iteration: int) -> None:
        hyper = self.config.hyper
        gp = self.tracker.gp
        if not hyper.enabled or gp is None or gp.n < max(2, hyper.gate_for(self.config.dim)):
            return
        if not np.any(gp.y != 0.0):
            return
        tuned = tune_length_scale(
            gp.X,
            gp.y,
            self.tracker.kernel,
            bounds=hyper.scale_bounds,
            budget=hyper.budget,
            jitter=self.tracker.jitter,
            gate_n=hyper.gate_n,
            grid_points=hyper.grid_points,
            seed=self.config.run.seed + iteration,
        )
        if tuned.length_scale != self.tracker.kernel.length_scale:
            self.tracker.refit(tuned)

    def _propose(self, k: int, iteration: int) -> Tuple[np.ndarray, Tuple[float, ...]]:
        dim = self.config.dim
        if self.tracker.gp is None:
            logger.warning("完了した評価がないため一様乱数点を提案します")
            return self.transform.from_unit(self._rng.uniform(size=(k, dim))), ()

        acqopt = self.config.acqopt
        exclude = [self.transform.to_unit(r.x) for r in self.state.pending]
        batch = select_infill(
            self.tracker.gp,
            self._acquisition_spec(),
            k,
            self.transform.unit_bounds(),
            iteration=iteration - 1,
            seed=int(self._rng.integers(2**31 - 1)),
            n_starts=acqopt.starts_for(dim),
            max_evals=acqopt.max_evals,
            tol=acqopt.tol,
            exclude=exclude or None,
        )
        return self.transform.from_unit(np.array(batch.points)), batch.kappas

    def step(self) -> None:
        """1 反復（調整 → 選択 → 評価 → 取り込み）"""
        state = self.state
        iteration = state.iteration + 1
        self._maybe_tune(iteration)
        k = min(self.config.acq.batch_k, self.config.run.max_evals - state.submitted)
        points, kappas = self._propose(k, iteration)

        report = self.evaluator.evaluate(points, state.pending, iteration=iteration)
        state.submitted += k
        state.iteration = iteration
        self._absorb(report, iteration, kappas)

        best = "なし" if state.best is None else f"{state.best[1]:.6g}"
        kappa = f"{kappas[0]:.3g}" if kappas else "-"
        logger.info(
            f"反復 {iteration}: κ={kappa} 完了 {len(report.completed)} / 保留 {len(report.pending)} / "
            f"失敗 {len(report.failed)} 最良値 {best} (投入 {state.submitted}/{self.config.run.max_evals})"
        )
        if iteration % self.config.run.checkpoint_every == 0:
            self._checkpoint()

    def _drain(self) -> None:
        """予算を使い切った後、保留中の評価の確定を待つ"""
        state = self.state
        if state.pending:
            logger.info(f"保留中の評価 {len(state.pending)} 件の完了を待ちます")
        while state.pending:
            report = self.evaluator.evaluate([], state.pending, iteration=state.iteration)
            self._absorb(report, state.iteration)
            if state.pending and not report.completed and not report.failed:
                self.clock.sleep(self.config.evaluator.poll_interval)

    def run(self, max_iterations: Optional[int] = None) -> RunState:
        """
        予算に達するまで最適化を実行

        Args:
            max_iterations: この呼び出しで実行する反復数の上限（途中停止用）

        Returns:
            最終的な RunState
        """
        try:
            if self.state is None:
                self._initial_design()
            done = 0
            while self.state.submitted < self.config.run.max_evals:
                if max_iterations is not None and done >= max_iterations:
                    logger.info(f"反復 {self.state.iteration} で停止します（max_iterations={max_iterations}）")
                    self._checkpoint()
                    self._sync_state()
                    return self.state
                self.step()
                done += 1
            self.state.loop_end_time = self.clock.now()
            if self.config.run.drain_pending:
                self._drain()
        except (FactorizationError, DuplicatePointError) as e:
            logger.error(f"サロゲートの更新に失敗しました。最後のチェックポイントを保持して終了します: {e}")
            raise OptimizationError(f"最適化を継続できません: {e}") from e

        self._checkpoint()
        self._sync_state()
        best = "なし" if self.state.best is None else f"{self.state.best[1]:.6g} at {self.state.best[0]}"
        logger.info(f"最適化が完了しました: 評価 {len(self.state.history)} 件、最良 {best}")
        return self.state

    def kriging_grid(self) -> Tuple[Tuple[Tuple[float, ...], float, float], ...]:
        """最終サロゲートの事後平均・分散をグリッド上で求める（元の単位）"""
        grid = uniform_grid(self.config.run.bounds, self.config.run.grid_size)
        gp = self.tracker.gp
        if gp is None:
            raise OptimizationError("完了した評価がないためクリギング結果を出力できません")
        means, variances = gp_predict_many(gp, self.transform.to_unit(grid))
        scaler = self.tracker.scaler
        means = scaler.inverse_mean(means)
        variances = scaler.inverse_variance(variances)
        return tuple(
            (tuple(float(v) for v in x), float(m), float(s)) for x, m, s in zip(grid, means, variances)
        )


def run(
    config: RunConfig,
    backend: EvaluationBackend,
    clock: Optional[Clock] = None,
    max_iterations: Optional[int] = None,
) -> RunState:
    """設定とバックエンドから最適化を実行"""
    return BayesianOptimizer(config, backend, clock=clock).run(max_iterations=max_iterations)


def resume(
    path: str,
    backend: EvaluationBackend,
    clock: Optional[Clock] = None,
    max_iterations: Optional[int] = None,
) -> RunState:
    """チェックポイントから再開して予算まで実行"""
    return BayesianOptimizer.from_checkpoint(path, backend, clock=clock).run(max_iterations=max_iterations)


def krige(config: RunConfig, backend: EvaluationBackend, clock: Optional[Clock] = None) -> KrigingReport:
    """純粋探索で予算分の評価を行い、グリッド上の事後平均・分散を返す"""
    if config.run.mode is not RunMode.KRIGE:
        config = config.model_copy(update={"run": config.run.model_copy(update={"mode": RunMode.KRIGE})})
    optimizer = BayesianOptimizer(config, backend, clock=clock)
    state = optimizer.run()
    return KrigingReport(rows=optimizer.kriging_grid(), state=state)
