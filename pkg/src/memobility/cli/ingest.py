"""
CSV データの取り込み

ヘッダー付き CSV を読み、列対応に従って Dataset を組み立てる。
対応付けた列に欠損がある行は件数を記録して除外する。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from memobility.config.settings import ColumnMapping
from memobility.errors import DataException, ErrorCode, create_data_error
from memobility.models import Dataset

logger = logging.getLogger(__name__)

# データ行の行番号はヘッダー行を1行目として数える
_FIRST_DATA_LINE = 2
_MAX_REPORTED_ROWS = 10


@dataclass(frozen=True, eq=False)
class IngestResult:
    """取り込み結果

    Attributes:
        dataset: 型付きのデータセット
        dropped_rows: 欠損により除外した行数
        source: 読み込んだファイル
    """
    dataset: Dataset
    dropped_rows: int
    source: Path


def _line_numbers(index: pd.Index) -> List[int]:
    return [int(i) + _FIRST_DATA_LINE for i in index[:_MAX_REPORTED_ROWS]]


def _read_frame(path: Path, delimiter: str) -> pd.DataFrame:
    try:
        return pd.read_csv(path, sep=delimiter, dtype=str, encoding="utf-8", skipinitialspace=True, comment="#")
    except FileNotFoundError as exc:
        raise DataException(
            create_data_error(ErrorCode.DATA_EMPTY, f"入力ファイルが見つかりません: {path}", details={"path": str(path)})
        ) from exc
    except pd.errors.EmptyDataError as exc:
        raise DataException(
            create_data_error(ErrorCode.DATA_EMPTY, f"入力ファイルが空です: {path}", details={"path": str(path)})
        ) from exc
    except (UnicodeDecodeError, pd.errors.ParserError) as exc:
        raise DataException(
            create_data_error(ErrorCode.DATA_INVALID, f"CSV を解析できません: {exc}", details={"path": str(path)})
        ) from exc


def _to_numeric(frame: pd.DataFrame, column: str) -> np.ndarray:
    raw = frame[column]
    values = pd.to_numeric(raw, errors="coerce")
    bad = values.isna() | ~np.isfinite(values.astype(float))
    if bad.any():
        lines = _line_numbers(frame.index[bad.to_numpy()])
        raise DataException(
            create_data_error(
                ErrorCode.DATA_NON_NUMERIC,
                f"列 '{column}' に数値でないセルがあります (行 {', '.join(map(str, lines))})",
                details={"column": column, "rows": lines},
            )
        )
    return values.to_numpy(dtype=float)


def _to_log(frame: pd.DataFrame, values: np.ndarray, column: str) -> np.ndarray:
    non_positive = values <= 0.0
    if np.any(non_positive):
        lines = _line_numbers(frame.index[non_positive])
        raise DataException(
            create_data_error(
                ErrorCode.DATA_INVALID,
                f"列 '{column}' に非正の値があるため対数を取れません (行 {', '.join(map(str, lines))})",
                details={"column": column, "rows": lines},
            )
        )
    return np.log(values)


def _to_ages(frame: pd.DataFrame, column: Optional[str]) -> Optional[np.ndarray]:
    if column is None:
        return None
    values = _to_numeric(frame, column)
    fractional = values != np.round(values)
    if np.any(fractional):
        lines = _line_numbers(frame.index[fractional])
        raise DataException(
            create_data_error(
                ErrorCode.DATA_NON_NUMERIC,
                f"年齢列 '{column}' は整数である必要があります (行 {', '.join(map(str, lines))})",
                details={"column": column, "rows": lines},
            )
        )
    return values.astype(int)


def ingest(path: Path, mapping: ColumnMapping) -> IngestResult:
    """CSV を読み込んで Dataset を作成

    Args:
        path: UTF-8 の CSV ファイル (ヘッダー行あり)
        mapping: 列と変数の対応

    Returns:
        IngestResult: データセットと除外行数

    Raises:
        DataException: 列が無い・数値でないセルがある・有効行が無い場合
    """
    path = Path(path)
    frame = _read_frame(path, mapping.delimiter)
    frame.columns = [str(c).strip() for c in frame.columns]

    required = mapping.required_columns()
    missing_columns = [c for c in required if c not in frame.columns]
    if missing_columns:
        raise DataException(
            create_data_error(
                ErrorCode.DATA_UNKNOWN_COLUMN,
                f"列 '{missing_columns[0]}' がヘッダーにありません",
                details={"missing": missing_columns, "available": list(frame.columns)},
            )
        )

    subset = frame[required].apply(lambda col: col.str.strip()).replace("", np.nan)
    complete = subset.notna().all(axis=1)
    dropped = int((~complete).sum())
    subset = subset[complete]
    if subset.empty:
        raise DataException(
            create_data_error(
                ErrorCode.DATA_EMPTY,
                "欠損を除くと有効な行がありません",
                details={"path": str(path), "dropped_rows": dropped},
            )
        )
    if dropped:
        logger.warning("ingest.rows_dropped path=%s dropped=%d", path, dropped)

    y = _to_numeric(subset, mapping.outcome)
    t = _to_numeric(subset, mapping.treatment)
    if mapping.log_outcome:
        y = _to_log(subset, y, mapping.outcome)
    if mapping.log_treatment:
        t = _to_log(subset, t, mapping.treatment)
    covariates = [_to_numeric(subset, c) for c in mapping.covariates]
    x = np.column_stack([np.ones(len(subset)), *covariates])

    dataset = Dataset(
        y=y,
        t=t,
        x=x,
        age_y=_to_ages(subset, mapping.age_outcome),
        age_t=_to_ages(subset, mapping.age_treatment),
        covariate_names=("intercept", *mapping.covariates),
        log_y=mapping.log_outcome,
        log_t=mapping.log_treatment,
    )
    logger.info("ingest.loaded path=%s rows=%d dropped=%d k=%d", path, dataset.n, dropped, dataset.k)
    return IngestResult(dataset=dataset, dropped_rows=dropped, source=path)
