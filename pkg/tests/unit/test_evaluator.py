"""
非同期評価器の単体テスト

スクリプト化バックエンドと仮想時計で、和集合・同時実行上限・
返却しきい値・旧点を待たない・再投入の各法則を確かめる。
"""

import math
from collections import Counter
from typing import List, Tuple

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.asybo.evaluation.clock import VirtualClock
from src.asybo.evaluation.evaluator import AsyncEvaluator, evaluate, required_resolutions
from src.asybo.evaluation.models import (
    BackendOutcome,
    EvaluationRecord,
    EvaluationStatus,
    EvaluatorConfig,
)
from tests.support import FailingSubmitBackend, ScriptedBackend, never_ready, value_after

# 点ごとの振る舞い: (poll 何回で確定するか, 最終結果の種類)
point_plans = st.tuples(
    st.integers(0, 4),
    st.sampled_from(["value", "failed", "again_then_value", "again_forever"]),
)


def plan_script(plans: List[Tuple[int, str]]):
    """x = (i,) の点に plans[i] の振る舞いを割り当てる"""

    def script(x, attempt):
        delay, kind = plans[int(x[0])]
        if kind == "value":
            final = BackendOutcome.of(float(x[0]))
        elif kind == "failed":
            final = BackendOutcome.failed("scripted failure")
        elif kind == "again_then_value" and attempt >= 2:
            final = BackendOutcome.of(float(x[0]))
        else:
            final = BackendOutcome.again()
        return [BackendOutcome.not_ready()] * delay + [final]

    return script


def xs(records) -> Counter:
    return Counter(tuple(r.x) for r in records)


def resolved_new(report, new_points) -> int:
    new_keys = {tuple(p) for p in new_points}
    return sum(1 for r in (*report.completed, *report.failed) if tuple(r.x) in new_keys)


class TestRequiredResolutions:
    """返却しきい値の計算"""

    @pytest.mark.parametrize(
        "fraction, n, expected",
        [(0.6, 5, 3), (1.0, 4, 4), (0.0, 4, 0), (0.25, 4, 1), (0.5, 3, 2), (0.3, 10, 3), (0.9, 0, 0)],
    )
    def test_ceiling(self, fraction, n, expected):
        assert required_resolutions(fraction, n) == expected


class TestAsyncEvaluatorExamples:
    """代表的なケース"""

    def test_partial_blocking_returns_after_threshold(self, virtual_clock):
        """|new| = 5, fraction = 0.6 → 3 点確定した時点で返る"""
        delays = [0, 1, 2, 50, 50]
        backend = ScriptedBackend(lambda x, attempt: value_after(delays[int(x[0])], x[0]))
        evaluator = AsyncEvaluator(EvaluatorConfig(max_simultaneous=5, blocking_fraction=0.6), backend, virtual_clock)

        report = evaluator.evaluate([(float(i),) for i in range(5)])

        assert len(report.completed) == 3
        assert len(report.pending) == 2
        assert {r.x for r in report.pending} == {(3.0,), (4.0,)}

    def test_full_blocking_leaves_nothing_pending(self, virtual_clock):
        backend = ScriptedBackend(lambda x, attempt: value_after(int(x[0]), x[0]))
        evaluator = AsyncEvaluator(EvaluatorConfig(max_simultaneous=2, blocking_fraction=1.0), backend, virtual_clock)

        report = evaluator.evaluate([(float(i),) for i in range(5)])

        assert report.pending == ()
        assert sorted(v for _, v in report.completed_points) == [0.0, 1.0, 2.0, 3.0, 4.0]
        assert backend.max_running <= 2

    def test_zero_blocking_returns_after_submission(self, virtual_clock):
        backend = ScriptedBackend(lambda x, attempt: never_ready())
        evaluator = AsyncEvaluator(EvaluatorConfig(max_simultaneous=4, blocking_fraction=0.0), backend, virtual_clock)

        report = evaluator.evaluate([(0.0,), (1.0,), (2.0,)])

        assert len(report.pending) == 3
        assert all(r.status is EvaluationStatus.RUNNING for r in report.pending)
        assert virtual_clock.now() == 0.0

    def test_queued_points_beyond_cap(self, virtual_clock):
        """上限を超えた点は Queued のまま保留に入る"""
        backend = ScriptedBackend(lambda x, attempt: never_ready())
        evaluator = AsyncEvaluator(EvaluatorConfig(max_simultaneous=2, blocking_fraction=0.0), backend, virtual_clock)

        report = evaluator.evaluate([(0.0,), (1.0,), (2.0,)])

        statuses = Counter(r.status for r in report.pending)
        assert statuses == {EvaluationStatus.RUNNING: 2, EvaluationStatus.QUEUED: 1}
        assert backend.max_running == 2

    def test_never_waits_for_old_points(self, virtual_clock):
        """完了しない旧点があっても新規点が揃えば返る"""
        backend = ScriptedBackend(lambda x, attempt: never_ready() if x[0] < 0 else value_after(3, x[0]))
        evaluator = AsyncEvaluator(EvaluatorConfig(max_simultaneous=4, blocking_fraction=0.0), backend, virtual_clock)
        first = evaluator.evaluate([(-1.0,)])

        report = evaluator.evaluate([(1.0,)], first.pending, blocking_fraction=1.0)

        assert report.completed_points == [((1.0,), 1.0)]
        assert [r.x for r in report.pending] == [(-1.0,)]
        assert virtual_clock.now() < 10 * evaluator.config.poll_interval

    def test_zero_blocking_does_not_poll_new_points(self, virtual_clock, scripted_backend):
        """fraction 0 では即座に値を返すバックエンドでも新規点は保留のまま"""
        evaluator = AsyncEvaluator(EvaluatorConfig(blocking_fraction=0.0), scripted_backend, virtual_clock)

        report = evaluator.evaluate([(0.0,), (1.0,)])

        assert report.completed == ()
        assert [r.status for r in report.pending] == [EvaluationStatus.RUNNING] * 2
        assert scripted_backend.poll_count == 0

    def test_stuck_old_points_fill_the_cap(self, virtual_clock):
        """完了しない旧点が上限を埋めていても、新規点を待ち行列に残して返る"""
        backend = ScriptedBackend(lambda x, attempt: never_ready() if x[0] < 0 else value_after(0, x[0]))
        evaluator = AsyncEvaluator(EvaluatorConfig(max_simultaneous=1, blocking_fraction=0.0), backend, virtual_clock)
        first = evaluator.evaluate([(-1.0,)])

        report = evaluator.evaluate([(1.0,)], first.pending, blocking_fraction=1.0)

        assert report.capacity_blocked
        assert report.completed == ()
        statuses = {r.x: r.status for r in report.pending}
        assert statuses == {(-1.0,): EvaluationStatus.RUNNING, (1.0,): EvaluationStatus.QUEUED}
        assert virtual_clock.now() == 0.0
        assert backend.max_running == 1

    def test_old_points_resolved_at_return(self, virtual_clock):
        """返却時に旧点を 1 回 poll し、確定していれば完了に移す"""
        backend = ScriptedBackend(lambda x, attempt: value_after(0, x[0]))
        evaluator = AsyncEvaluator(EvaluatorConfig(blocking_fraction=0.0), backend, virtual_clock)
        first = evaluator.evaluate([(5.0,)])
        assert len(first.pending) == 1

        second = evaluator.evaluate([], first.pending)

        assert second.completed_points == [((5.0,), 5.0)]
        assert second.pending == ()

    def test_retry_then_value(self, virtual_clock):
        """EvaluateAgain 2 回の後に Value → attempts = 3 で完了"""
        backend = ScriptedBackend(
            lambda x, attempt: [BackendOutcome.again()] if attempt < 3 else [BackendOutcome.of(7.0)]
        )
        evaluator = AsyncEvaluator(EvaluatorConfig(max_attempts=3), backend, virtual_clock)

        report = evaluator.evaluate([(0.5,)])

        assert len(report.completed) == 1
        assert report.completed[0].attempts == 3
        assert report.completed[0].value == 7.0
        assert backend.submissions[(0.5,)] == 3

    def test_retries_exhausted(self, virtual_clock):
        backend = ScriptedBackend(lambda x, attempt: [BackendOutcome.again()])
        evaluator = AsyncEvaluator(EvaluatorConfig(max_attempts=2), backend, virtual_clock)

        report = evaluator.evaluate([(0.5,)])

        assert len(report.failed) == 1
        assert report.failed[0].attempts == 2
        assert "retries exhausted" in report.failed[0].reason

    def test_backend_failure_lands_in_failed(self, virtual_clock):
        backend = ScriptedBackend(lambda x, attempt: [BackendOutcome.failed("segfault")])
        report = AsyncEvaluator(EvaluatorConfig(), backend, virtual_clock).evaluate([(0.1,), (0.2,)])
        assert [reason for _, reason in report.failed_points] == ["segfault", "segfault"]

    def test_non_finite_value_fails(self, virtual_clock):
        backend = ScriptedBackend(lambda x, attempt: [BackendOutcome.of(math.inf)])
        report = AsyncEvaluator(EvaluatorConfig(), backend, virtual_clock).evaluate([(0.1,)])
        assert report.completed == ()
        assert "non-finite" in report.failed[0].reason

    def test_transport_error_is_not_raised(self, virtual_clock):
        """submit の例外は失敗レコードになり、評価器の外へは出ない"""
        report = AsyncEvaluator(EvaluatorConfig(), FailingSubmitBackend(), virtual_clock).evaluate([(0.1,), (0.2,)])
        assert len(report.failed) == 2
        assert all(r.reason.startswith("transport:") for r in report.failed)

    def test_ids_are_unique_and_continue(self, virtual_clock, scripted_backend):
        evaluator = AsyncEvaluator(EvaluatorConfig(), scripted_backend, virtual_clock)
        first = evaluator.evaluate([(0.0,), (1.0,)])
        second = evaluator.evaluate([(2.0,)])
        ids = [r.id for r in (*first.completed, *second.completed)]
        assert ids == ["e000001", "e000002", "e000003"]
        assert evaluator.next_counter == 3

    def test_adopts_restored_records(self, virtual_clock, scripted_backend):
        """チェックポイントから戻した実行中レコードは再投入され、ID は衝突しない"""
        restored = EvaluationRecord(
            id="e000005", x=(0.25,), status=EvaluationStatus.RUNNING, attempts=1, submit_time=0.0, iteration=3
        )
        evaluator = AsyncEvaluator(EvaluatorConfig(), scripted_backend, virtual_clock, start_counter=4)

        report = evaluator.evaluate([(0.75,)], [restored], iteration=4)

        by_id = {r.id: r for r in report.completed}
        assert set(by_id) == {"e000005", "e000006"}
        assert by_id["e000005"].attempts == 2
        assert by_id["e000005"].iteration == 3
        assert by_id["e000006"].iteration == 4

    def test_module_level_evaluate(self, virtual_clock, scripted_backend):
        report = evaluate(EvaluatorConfig(), scripted_backend, [(1.0, 2.0)], clock=virtual_clock)
        assert report.completed_points == [((1.0, 2.0), 3.0)]


class TestAsyncEvaluatorLaws:
    """ランダムなスクリプトに対する法則"""

    @settings(max_examples=1000, deadline=None)
    @given(
        plans=st.lists(point_plans, min_size=0, max_size=12),
        n_old=st.integers(0, 6),
        cap=st.integers(1, 4),
        fraction=st.sampled_from([0.0, 0.25, 0.5, 0.6, 0.75, 0.9, 1.0]),
        max_attempts=st.integers(1, 3),
    )
    def test_contract(self, plans, n_old, cap, fraction, max_attempts):
        n_old = min(n_old, len(plans))
        clock = VirtualClock()
        backend = ScriptedBackend(plan_script(plans))
        config = EvaluatorConfig(max_simultaneous=cap, blocking_fraction=fraction, max_attempts=max_attempts)
        evaluator = AsyncEvaluator(config, backend, clock)

        old_points = [(float(i),) for i in range(n_old)]
        new_points = [(float(i),) for i in range(n_old, len(plans))]

        first = evaluator.evaluate(old_points, blocking_fraction=0.0)
        assert xs(first.all_records()) == Counter(old_points)

        report = evaluator.evaluate(new_points, first.pending, iteration=1)

        # 和集合: completed ∪ pending ∪ failed = new ∪ old
        assert xs(report.all_records()) == Counter(new_points) + xs(first.pending)
        # 同時実行上限
        assert backend.max_running <= cap
        # 返却しきい値は新規点だけで数える（上限を旧点が占有していた場合を除く）
        if not report.capacity_blocked:
            assert resolved_new(report, new_points) >= required_resolutions(fraction, len(new_points))
        # 再投入回数の上限
        assert all(1 <= r.attempts <= max_attempts for r in (*report.completed, *report.failed) if r.attempts)
        assert all(r.status in (EvaluationStatus.QUEUED, EvaluationStatus.RUNNING) for r in report.pending)
        for record in report.completed:
            assert record.value == record.x[0]

    @settings(max_examples=1000, deadline=None)
    @given(n_new=st.integers(1, 6), n_stuck=st.integers(1, 4), cap=st.integers(1, 4))
    def test_never_waits_for_stuck_old_points(self, n_new, n_stuck, cap):
        """旧点が完了しなくても、新規点がすべて確定すれば返る"""
        clock = VirtualClock()
        backend = ScriptedBackend(lambda x, attempt: never_ready() if x[0] < 0 else value_after(2, x[0]))
        evaluator = AsyncEvaluator(EvaluatorConfig(max_simultaneous=cap + n_stuck, blocking_fraction=0.0), backend, clock)
        stuck = evaluator.evaluate([(-1.0 - i,) for i in range(n_stuck)])

        report = evaluator.evaluate([(float(i),) for i in range(n_new)], stuck.pending, blocking_fraction=1.0)

        assert len(report.completed) == n_new
        assert xs(report.pending) == xs(stuck.pending)

    @settings(max_examples=1000, deadline=None)
    @given(n_new=st.integers(1, 6), n_stuck=st.integers(1, 4), fraction=st.sampled_from([0.25, 0.5, 1.0]))
    def test_never_waits_when_stuck_points_hold_every_slot(self, n_new, n_stuck, fraction):
        """上限 = 完了しない旧点の数でも、時間を進めずに返る"""
        clock = VirtualClock()
        backend = ScriptedBackend(lambda x, attempt: never_ready() if x[0] < 0 else value_after(0, x[0]))
        evaluator = AsyncEvaluator(EvaluatorConfig(max_simultaneous=n_stuck, blocking_fraction=0.0), backend, clock)
        stuck = evaluator.evaluate([(-1.0 - i,) for i in range(n_stuck)])

        report = evaluator.evaluate([(float(i),) for i in range(n_new)], stuck.pending, blocking_fraction=fraction)

        assert report.capacity_blocked
        assert clock.now() == 0.0
        assert xs(report.all_records()) == Counter((float(i),) for i in range(n_new)) + xs(stuck.pending)
        assert all(r.status is EvaluationStatus.QUEUED for r in report.pending if r.x[0] >= 0)
        assert backend.max_running == n_stuck

    @settings(max_examples=1000, deadline=None)
    @given(agains=st.integers(0, 5), max_attempts=st.integers(1, 5))
    def test_retry_law(self, agains, max_attempts):
        """EvaluateAgain を agains 回返した後に Value を返す点"""
        backend = ScriptedBackend(
            lambda x, attempt: [BackendOutcome.again()] if attempt <= agains else [BackendOutcome.of(1.0)]
        )
        report = AsyncEvaluator(EvaluatorConfig(max_attempts=max_attempts), backend, VirtualClock()).evaluate([(0.0,)])

        if agains < max_attempts:
            assert report.completed[0].attempts == agains + 1
        else:
            assert report.failed[0].attempts == max_attempts
            assert backend.submissions[(0.0,)] == max_attempts
