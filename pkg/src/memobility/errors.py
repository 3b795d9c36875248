"""
エラー定義

memobility で使用されるエラーコードと例外クラス
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional


class ErrorCode(Enum):
    """エラーコード

    カテゴリ別にエラーコードを定義:
    - CONFIG_xxx: 設定エラー
    - DATA_xxx: 入力データエラー
    - NUMERIC_xxx: 数値計算エラー
    - ESTIMATION_xxx: 推定手続きのエラー
    - MODEL_xxx: モデルファイルのエラー
    """
    # 設定エラー
    CONFIG_FILE_ERROR = "CONFIG_001"
    CONFIG_INVALID_VALUE = "CONFIG_002"
    CONFIG_USAGE = "CONFIG_003"

    # データエラー
    DATA_UNKNOWN_COLUMN = "DATA_001"
    DATA_NON_NUMERIC = "DATA_002"
    DATA_EMPTY = "DATA_003"
    DATA_INVALID = "DATA_004"
    DATA_MISSING_AGE = "DATA_005"
    DATA_REFERENCE_CELL = "DATA_006"

    # 数値計算エラー
    NUMERIC_SINGULAR_DESIGN = "NUMERIC_001"
    NUMERIC_NOT_CONVERGED = "NUMERIC_002"
    NUMERIC_DOMAIN = "NUMERIC_003"
    NUMERIC_UNDEFINED = "NUMERIC_004"

    # 推定エラー
    ESTIMATION_EM_NOT_CONVERGED = "ESTIMATION_001"
    ESTIMATION_SMLE_FLAGGED = "ESTIMATION_002"
    ESTIMATION_TOO_MANY_FAILURES = "ESTIMATION_003"

    # モデルファイルエラー
    MODEL_SCHEMA_INVALID = "MODEL_001"
    MODEL_VERSION_MISMATCH = "MODEL_002"


@dataclass
class MobilityError:
    """エラー情報

    Attributes:
        code: エラーコード文字列
        message: エラーメッセージ
        details: 追加のエラー詳細情報
        recoverable: 復旧可能かどうか
        log_level: 記録時のログレベル
    """
    code: str
    message: str
    details: Optional[Dict[str, Any]] = None
    recoverable: bool = False
    log_level: int = logging.ERROR


class MobilityException(Exception):
    """memobility 例外クラス

    MobilityErrorをラップする例外クラス
    """

    def __init__(self, error: MobilityError):
        """MobilityExceptionを初期化

        Args:
            error: MobilityErrorインスタンス
        """
        self.error = error
        self.log_level = error.log_level
        super().__init__(f"[{error.code}] {error.message}")


class ValidationException(MobilityException):
    """設定・引数の検証エラー"""


class DataException(MobilityException):
    """入力データの不備"""


class DomainException(MobilityException):
    """パラメータが許容区間の外にある"""


class SingularDesignException(MobilityException):
    """計画行列がフルランクでない"""


class ConvergenceException(MobilityException):
    """反復計算が収束しなかった (details["best"] に最良の反復値)"""


class ModelFileException(MobilityException):
    """モデルファイルのスキーマ・バージョン不整合"""


ERROR_CODE_LOG_LEVEL: Dict[ErrorCode, int] = {
    ErrorCode.NUMERIC_NOT_CONVERGED: logging.WARNING,
    ErrorCode.ESTIMATION_EM_NOT_CONVERGED: logging.WARNING,
    ErrorCode.ESTIMATION_SMLE_FLAGGED: logging.WARNING,
    ErrorCode.ESTIMATION_TOO_MANY_FAILURES: logging.ERROR,
    ErrorCode.NUMERIC_SINGULAR_DESIGN: logging.ERROR,
    ErrorCode.MODEL_VERSION_MISMATCH: logging.ERROR,
}


def _level(code: ErrorCode) -> int:
    return ERROR_CODE_LOG_LEVEL.get(code, logging.ERROR)


# よく使用されるエラーのファクトリ関数
def create_config_error(
    message: str,
    details: Optional[Dict[str, Any]] = None,
    code: ErrorCode = ErrorCode.CONFIG_INVALID_VALUE,
) -> MobilityError:
    """設定エラーを作成

    Args:
        message: エラーメッセージ
        details: 追加詳細
        code: エラーコード（既定は CONFIG_002）

    Returns:
        MobilityError: 設定エラー
    """
    return MobilityError(
        code=code.value,
        message=message,
        details=details,
        recoverable=False,
        log_level=_level(code),
    )


def create_data_error(
    code: ErrorCode,
    message: str,
    details: Optional[Dict[str, Any]] = None,
) -> MobilityError:
    """データエラーを作成

    Args:
        code: エラーコード
        message: エラーメッセージ
        details: 追加詳細（列名・行番号など）

    Returns:
        MobilityError: データエラー
    """
    return MobilityError(
        code=code.value,
        message=message,
        details=details,
        recoverable=False,
        log_level=_level(code),
    )


def create_numeric_error(
    code: ErrorCode,
    message: str,
    details: Optional[Dict[str, Any]] = None,
    recoverable: bool = False,
) -> MobilityError:
    """数値計算エラーを作成

    Args:
        code: エラーコード
        message: エラーメッセージ
        details: 追加詳細
        recoverable: 呼び出し側で継続可能かどうか

    Returns:
        MobilityError: 数値計算エラー
    """
    return MobilityError(
        code=code.value,
        message=message,
        details=details,
        recoverable=recoverable,
        log_level=_level(code),
    )


def create_estimation_error(
    code: ErrorCode,
    message: str,
    details: Optional[Dict[str, Any]] = None,
) -> MobilityError:
    """推定手続きのエラーを作成"""
    return MobilityError(
        code=code.value,
        message=message,
        details=details,
        recoverable=code is not ErrorCode.ESTIMATION_TOO_MANY_FAILURES,
        log_level=_level(code),
    )


def create_model_file_error(
    code: ErrorCode,
    message: str,
    details: Optional[Dict[str, Any]] = None,
) -> MobilityError:
    """モデルファイルのエラーを作成"""
    return MobilityError(
        code=code.value,
        message=message,
        details=details,
        recoverable=False,
        log_level=_level(code),
    )


def exit_code_for(exc: BaseException) -> int:
    """例外から CLI の終了コードを決める

    Returns:
        int: 1 (使い方・設定), 2 (データ), 3 (非収束)
    """
    if isinstance(exc, ConvergenceException):
        return 3
    if isinstance(exc, (DataException, ModelFileException, SingularDesignException, DomainException)):
        return 2
    return 1
