"""
最適化ループの統合テスト
"""

import numpy as np
import pytest

from src.asybo.core.error_handler import CheckpointError, OptimizationError
from src.asybo.core.optimizer import BayesianOptimizer, SurrogateTracker, krige, resume, run
from src.asybo.evaluation.backends.in_process import InProcessBackend
from src.asybo.evaluation.backends.simulated import SimulatedLatencyBackend
from src.asybo.evaluation.clock import VirtualClock
from src.asybo.evaluation.models import EvaluationStatus
from src.asybo.surrogate.gp import gp_predict_many
from tests.support import ScriptedBackend, make_config, sphere, value_after


# 10 反復の実行（max_evals 24、初期計画 4、2 点ずつ）の全停止位置
KILL_POINTS = list(range(10))


def trajectory(state):
    return [(r.id, r.x, r.status, r.value) for r in state.history]


def slow_half(x, attempt):
    """座標から決まる約半数の点は 2 回目の poll で確定する"""
    polls = int(abs(x[0]) * 1e9) % 2
    return value_after(polls, sphere(x))


def failing_right_half(x) -> float:
    if x[0] > 0.0:
        raise RuntimeError("mesh generation failed")
    return sphere(x)


class TestOptimizationLoop:
    """BayesianOptimizer.run の基本動作"""

    def test_budget_is_respected(self, small_config, virtual_clock):
        state = run(small_config, InProcessBackend(sphere), clock=virtual_clock)

        assert state.submitted == small_config.run.max_evals
        assert len(state.history) == small_config.run.max_evals
        assert state.pending == []
        assert len({r.id for r in state.history}) == len(state.history)
        for record in state.history:
            assert all(-1.0 <= v <= 1.0 for v in record.x)

    def test_best_is_minimum_of_history(self, small_config, virtual_clock):
        state = run(small_config, InProcessBackend(sphere), clock=virtual_clock)
        assert state.best[1] == min(r.value for r in state.completed)

    def test_initial_design_only(self, virtual_clock):
        config = make_config({"run.max_evals": 4})
        state = run(config, InProcessBackend(sphere), clock=virtual_clock)
        assert state.iteration == 0
        assert len(state.history) == 4
        assert {r.iteration for r in state.history} == {0}

    def test_deterministic_for_seed(self, small_config):
        first = run(small_config, InProcessBackend(sphere), clock=VirtualClock())
        second = run(small_config, InProcessBackend(sphere), clock=VirtualClock())
        assert trajectory(first) == trajectory(second)

    def test_blocking_fraction_irrelevant_for_instant_backend(self, small_config):
        partial = make_config({"evaluator.blocking_fraction": 0.9})
        full = run(small_config, InProcessBackend(sphere), clock=VirtualClock())
        relaxed = run(partial, InProcessBackend(sphere), clock=VirtualClock())
        assert [(r.x, r.value) for r in full.history] == [(r.x, r.value) for r in relaxed.history]

    def test_surrogate_blocks_match_completed(self, small_config, virtual_clock):
        optimizer = BayesianOptimizer(small_config, InProcessBackend(sphere), clock=virtual_clock)
        state = optimizer.run()
        assert optimizer.tracker.gp.n == len(state.completed)
        assert sorted({r.block for r in state.completed}) == list(range(optimizer.tracker.blocks))

    def test_failed_points_excluded_from_surrogate(self, small_config, virtual_clock):
        optimizer = BayesianOptimizer(small_config, InProcessBackend(failing_right_half), clock=virtual_clock)
        state = optimizer.run()

        assert state.failed
        assert all("mesh generation failed" in r.reason for r in state.failed)
        assert len(state.history) == small_config.run.max_evals
        assert optimizer.tracker.gp.n == len(state.completed)
        assert all(r.block is None for r in state.failed)

    def test_pending_points_drained(self, small_config):
        clock = VirtualClock()
        config = make_config({"evaluator.blocking_fraction": 0.5})
        backend = SimulatedLatencyBackend(sphere, clock, latency_mean=10.0, latency_std=5.0, seed=3)
        state = run(config, backend, clock=clock)

        assert state.pending == []
        assert len(state.history) == config.run.max_evals
        assert state.loop_end_time <= clock.now()


class TestSurrogateTracker:
    """完了点の取り込み"""

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_posterior_independent_of_assimilation_order(self, small_config, seed):
        """同じ完了点の集合なら、取り込む順序とブロック分割によらず事後分布は同じ"""
        rng = np.random.default_rng(seed)
        X = rng.uniform(size=(9, 2))
        y = [sphere(x) for x in X]
        order = rng.permutation(9)

        in_order = SurrogateTracker(small_config.kernel, small_config.gp.jitter, normalize_y=True)
        in_order.add_block(X[:4], y[:4])
        in_order.add_block(X[4:], y[4:])

        shuffled = SurrogateTracker(small_config.kernel, small_config.gp.jitter, normalize_y=True)
        for block in np.array_split(order, 3):
            shuffled.add_block(X[block], [y[i] for i in block])

        grid = rng.uniform(size=(25, 2))
        means_a, vars_a = gp_predict_many(in_order.gp, grid)
        means_b, vars_b = gp_predict_many(shuffled.gp, grid)
        np.testing.assert_allclose(
            in_order.scaler.inverse_mean(means_a), shuffled.scaler.inverse_mean(means_b), atol=1e-8
        )
        np.testing.assert_allclose(vars_a, vars_b, atol=1e-8)


class TestCheckpointResume:
    """途中停止とチェックポイントからの再開"""

    @pytest.mark.parametrize("kill_after", KILL_POINTS)
    def test_resume_matches_uninterrupted_run(self, tmp_path, kill_after):
        path = tmp_path / "run.ckpt"
        config = make_config({"run.checkpoint_path": str(path), "run.max_evals": 24})
        uninterrupted = run(make_config({"run.max_evals": 24}), InProcessBackend(sphere), clock=VirtualClock())

        stopped = run(config, InProcessBackend(sphere), clock=VirtualClock(), max_iterations=kill_after)
        assert stopped.iteration == kill_after
        assert stopped.submitted < config.run.max_evals

        resumed = resume(str(path), InProcessBackend(sphere), clock=VirtualClock())
        assert trajectory(resumed) == trajectory(uninterrupted)

    def test_resume_with_pending_matches_uninterrupted_run(self, tmp_path):
        """保留中の点を抱えたまま停止しても、再開後の履歴は中断なしの実行と一致する"""
        overrides = {"run.max_evals": 24, "evaluator.blocking_fraction": 0.5}
        uninterrupted = run(make_config(overrides), ScriptedBackend(slow_half), clock=VirtualClock())

        kills_with_pending = 0
        for kill_after in KILL_POINTS:
            path = tmp_path / f"run{kill_after}.ckpt"
            config = make_config({**overrides, "run.checkpoint_path": str(path)})
            stopped = run(config, ScriptedBackend(slow_half), clock=VirtualClock(), max_iterations=kill_after)
            kills_with_pending += bool(stopped.pending)

            resumed = resume(str(path), ScriptedBackend(slow_half), clock=VirtualClock())
            assert trajectory(resumed) == trajectory(uninterrupted), f"kill_after={kill_after}"
        assert kills_with_pending > 0

    def test_checkpoint_restores_surrogate(self, tmp_path):
        path = tmp_path / "run.ckpt"
        config = make_config({"run.checkpoint_path": str(path)})
        original = BayesianOptimizer(config, InProcessBackend(sphere), clock=VirtualClock())
        original.run(max_iterations=3)

        restored = BayesianOptimizer.from_checkpoint(str(path), InProcessBackend(sphere), clock=VirtualClock())
        np.testing.assert_array_equal(restored.tracker.gp.X, original.tracker.gp.X)
        np.testing.assert_array_equal(restored.tracker.gp.chol, original.tracker.gp.chol)
        assert restored.tracker.kernel == original.tracker.kernel
        assert restored.state.next_id == original.state.next_id

    def test_resume_with_pending_points(self, tmp_path):
        """保留中の点は再開後に再投入される"""
        path = tmp_path / "run.ckpt"
        config = make_config({"run.checkpoint_path": str(path), "evaluator.blocking_fraction": 0.0})
        clock = VirtualClock()
        backend = SimulatedLatencyBackend(sphere, clock, latency_mean=50.0, latency_std=0.0)
        stopped = run(config, backend, clock=clock, max_iterations=1)
        pending_ids = {r.id for r in stopped.pending}
        assert pending_ids

        resumed = resume(str(path), InProcessBackend(sphere), clock=VirtualClock())
        ids = [r.id for r in resumed.history]
        assert pending_ids <= set(ids)
        assert len(ids) == len(set(ids)) == config.run.max_evals
        assert all(r.status is EvaluationStatus.COMPLETED for r in resumed.history)

    def test_corrupt_checkpoint_is_reported(self, tmp_path):
        path = tmp_path / "run.ckpt"
        path.write_text("asybo-checkpoint\t1\tdeadbeef\t2\n", encoding="utf-8")
        with pytest.raises(CheckpointError):
            BayesianOptimizer.from_checkpoint(str(path), InProcessBackend(sphere))


class TestKriging:
    """クリギングモード"""

    def test_grid_posterior(self, virtual_clock):
        def quadratic(x) -> float:
            return float((x[0] - 0.5) ** 2 + 1.0)

        config = make_config(
            {"run.bounds": [[0.0, 1.0]], "run.max_evals": 8, "run.n_init": 4, "run.grid_size": 11, "acq.batch_k": 1}
        )
        report = krige(config, InProcessBackend(quadratic), clock=virtual_clock)

        assert report.points().shape == (11, 1)
        assert np.all(report.variances() >= 0.0)
        truth = np.array([quadratic(x) for x in report.points()])
        assert np.max(np.abs(report.means() - truth)) < 0.1
        assert len(report.state.history) == 8

    def test_no_completed_points(self, virtual_clock):
        def always_fails(x) -> float:
            raise RuntimeError("license server down")

        config = make_config({"run.max_evals": 4})
        optimizer = BayesianOptimizer(config, InProcessBackend(always_fails), clock=virtual_clock)
        state = optimizer.run()
        assert state.best is None
        with pytest.raises(OptimizationError):
            optimizer.kriging_grid()
