"""
エラーハンドリング共通クラス
最適化エンジン全体で統一された例外階層とエラーハンドリングを提供します。
"""

import logging
from typing import Any, Dict, Optional, Sequence

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_RUNTIME_ERROR = 3


class AsyboError(Exception):
    """asybo の全例外の基底クラス"""


class InvalidArgumentError(AsyboError, ValueError):
    """引数が事前条件を満たさない"""


class DuplicatePointError(AsyboError):
    """学習点が重複しておりグラム行列が特異になる"""

    def __init__(self, message: str, indices: Optional[Sequence[int]] = None):
        super().__init__(message)
        self.indices = tuple(indices or ())


class FactorizationError(AsyboError):
    """Cholesky 分解の失敗（ジッター付加後も正定値でない）"""

    def __init__(self, message: str, pivot: int):
        super().__init__(message)
        self.pivot = pivot


class NumericalDomainError(AsyboError):
    """数値的に定義域外（例: log の引数が非正）"""


class ObjectiveEvaluationError(AsyboError):
    """目的関数が有限でない値を返した"""

    def __init__(self, message: str, point: Sequence[float]):
        super().__init__(message)
        self.point = tuple(float(v) for v in point)


class BackendTransportError(AsyboError):
    """評価バックエンドとの通信・起動の失敗"""


class ConfigError(AsyboError):
    """設定ファイル・上書き指定の誤り"""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


class CheckpointError(AsyboError):
    """チェックポイントファイルの破損・切り詰め"""

    def __init__(self, message: str, line: Optional[int] = None, record: Optional[str] = None):
        super().__init__(message)
        self.line = line
        self.record = record


class CheckpointVersionError(CheckpointError):
    """チェックポイントのフォーマットバージョン不一致"""


class OptimizationError(AsyboError):
    """最適化ループの回復不能な失敗（最後のチェックポイントは保持される）"""


class ErrorHandler:
    """エラーハンドリング共通クラス"""

    @staticmethod
    def handle_backend_error(error: Exception, backend_name: str, operation: str = "") -> Dict[str, Any]:
        """バックエンドエラーの統一処理"""
        error_message = f"{backend_name}"
        if operation:
            error_message += f"の{operation}"
        error_message += f"でエラーが発生しました: {error}"

        logger.warning(error_message)
        return {
            "error": error_message,
            "source": backend_name,
            "operation": operation,
            "type": "transport",
        }

    @staticmethod
    def handle_config_error(error: ConfigError, command: str) -> Dict[str, Any]:
        """設定エラーの統一処理"""
        error_message = f"{command}: 設定エラー: {error}"
        logger.error(error_message)
        return {
            "error": error_message,
            "source": command,
            "operation": "config",
            "type": "config",
            "key": error.key,
        }

    @staticmethod
    def handle_runtime_error(error: Exception, command: str, operation: str = "") -> Dict[str, Any]:
        """実行時エラーの統一処理"""
        error_message = f"{command}"
        if operation:
            error_message += f"の{operation}"
        error_message += f"で実行時エラーが発生しました: {error}"

        logger.error(error_message, exc_info=not isinstance(error, AsyboError))
        return {
            "error": error_message,
            "source": command,
            "operation": operation,
            "type": "runtime",
        }

    @staticmethod
    def exit_code_for(error: Optional[BaseException]) -> int:
        """例外から CLI の終了コードを決める"""
        if error is None:
            return EXIT_OK
        if isinstance(error, ConfigError):
            return EXIT_CONFIG_ERROR
        return EXIT_RUNTIME_ERROR
