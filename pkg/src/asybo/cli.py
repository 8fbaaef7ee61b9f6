"""
コマンドラインインターフェース

サブコマンド:
    optimize      設定ファイルに従って最適化を実行
    krige         純粋探索（クリギング）モードで実行し、グリッド上の事後分布を出力
    async-study   ブロッキング率ごとの総完了時間を比較する実験
    infill-study  インフィル点数ごとの最適化軌跡を比較する実験
    resume        チェックポイントから再開して予算まで実行

終了コード: 0 = 成功, 2 = 設定エラー, 3 = 実行時エラー
"""

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Callable, Dict, List, Optional

from .bench.studies import (
    TimingStudyConfig,
    infill_header,
    run_infill_study,
    run_timing_study,
)
from .core.checkpoint import read_checkpoint
from .core.config import AppSettings, RunConfig, RunMode, load_run_config, setup_logging
from .core.error_handler import EXIT_OK, ConfigError, ErrorHandler
from .core.history import render_summary, write_history_csv, write_rows_csv, write_summary
from .core.optimizer import BayesianOptimizer
from .dependencies.backends import create_backend, create_clock, resolve_benchmark, resolve_cost_function

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "run.ckpt"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="asybo", description="非同期ベイズ最適化エンジン")
    parser.add_argument("--log-level", default=None, help="ログレベル（既定は ASYBO_LOG_LEVEL）")
    subparsers = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("optimize", "最適化を実行"),
        ("krige", "クリギング（純粋探索）を実行"),
        ("async-study", "ブロッキング率のタイミング実験"),
        ("infill-study", "インフィル点数の比較実験"),
    ):
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--config", required=True, help="key = value 形式の設定ファイル")
        sub.add_argument(
            "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="設定の上書き（複数可）"
        )
        sub.add_argument("--output-dir", default=None, help="出力先（既定は ASYBO_OUTPUT_DIR）")

    resume = subparsers.add_parser("resume", help="チェックポイントから再開")
    resume.add_argument("--checkpoint", required=True, help="チェックポイントファイル")
    resume.add_argument("--output-dir", default=None, help="出力先（既定は ASYBO_OUTPUT_DIR）")
    return parser


def _with_checkpoint(config: RunConfig, output_dir: Path) -> RunConfig:
    if config.run.checkpoint_path:
        return config
    run = config.run.model_copy(update={"checkpoint_path": str(output_dir / CHECKPOINT_NAME)})
    return config.model_copy(update={"run": run})


def _close(backend) -> None:
    close = getattr(backend, "close", None)
    if callable(close):
        close()


def _write_run_outputs(optimizer: BayesianOptimizer, output_dir: Path, command: str, wall_time: float) -> None:
    state = optimizer.state
    config = optimizer.config
    write_history_csv(str(output_dir / "history.csv"), state.all_records(), config.dim)
    write_summary(
        str(output_dir / "summary.txt"),
        render_summary(config, state.all_records(), state.best, wall_time, command=command),
    )
    if config.run.mode is RunMode.KRIGE:
        header = [*[f"x{i + 1}" for i in range(config.dim)], "mean", "variance"]
        rows = [[*x, mean, variance] for x, mean, variance in optimizer.kriging_grid()]
        write_rows_csv(str(output_dir / "krige_grid.csv"), header, rows)


def _run_optimizer(optimizer: BayesianOptimizer, output_dir: Path, command: str) -> None:
    start = time.monotonic()
    try:
        optimizer.run()
    finally:
        _close(optimizer.backend)
    _write_run_outputs(optimizer, output_dir, command, time.monotonic() - start)


def cmd_optimize(args: argparse.Namespace, output_dir: Path) -> None:
    config = _with_checkpoint(load_run_config(args.config, args.overrides), output_dir)
    if args.command == "krige" and config.run.mode is not RunMode.KRIGE:
        config = config.model_copy(update={"run": config.run.model_copy(update={"mode": RunMode.KRIGE})})
    clock = create_clock(config)
    backend = create_backend(config, clock)
    _run_optimizer(BayesianOptimizer(config, backend, clock=clock), output_dir, args.command)


def cmd_resume(args: argparse.Namespace, output_dir: Path) -> None:
    data = read_checkpoint(args.checkpoint)
    clock = create_clock(data.config)
    backend = create_backend(data.config, clock)
    _run_optimizer(BayesianOptimizer.restore(data, backend, clock=clock), output_dir, "resume")


def cmd_async_study(args: argparse.Namespace, output_dir: Path) -> None:
    config = load_run_config(args.config, args.overrides)
    study = TimingStudyConfig.from_run_config(config)
    fn = resolve_cost_function(config.objective.function, config.dim)
    result = run_timing_study(study, config, fn)
    write_rows_csv(str(output_dir / "timing.csv"), ["fraction", "realization", "total_time"], result.rows)
    write_rows_csv(
        str(output_dir / "timing_summary.csv"),
        ["fraction", "mean", "std", "min", "max"],
        [[s.fraction, s.mean, s.std, s.min, s.max] for s in result.summary],
    )


def cmd_infill_study(args: argparse.Namespace, output_dir: Path) -> None:
    config = load_run_config(args.config, args.overrides)
    fn = resolve_benchmark(config.objective.function, config.dim)
    trajectories = run_infill_study(fn, config.study.ks, config.run.max_evals, config.run.seed, config)
    rows = [row for trajectory in trajectories for row in trajectory.rows()]
    write_rows_csv(str(output_dir / "infill.csv"), infill_header(fn.dim), rows)


COMMANDS: Dict[str, Callable[[argparse.Namespace, Path], None]] = {
    "optimize": cmd_optimize,
    "krige": cmd_optimize,
    "async-study": cmd_async_study,
    "infill-study": cmd_infill_study,
    "resume": cmd_resume,
}


def main(argv: Optional[List[str]] = None) -> int:
    """引数を解析してサブコマンドを実行し、終了コードを返す"""
    args = build_parser().parse_args(argv)
    if args.log_level:
        setup_logging(args.log_level)

    try:
        output_dir = Path(args.output_dir or AppSettings().output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, output_dir)
    except ConfigError as e:
        info = ErrorHandler.handle_config_error(e, args.command)
        print(f"error: {info['error']}", file=sys.stderr)
        return ErrorHandler.exit_code_for(e)
    except Exception as e:
        info = ErrorHandler.handle_runtime_error(e, args.command)
        print(f"error: {info['error']}", file=sys.stderr)
        return ErrorHandler.exit_code_for(e)

    logger.info(f"{args.command} が完了しました。出力先: {output_dir}")
    return EXIT_OK
