"""
ライフサイクル測定誤差の補正

観測年齢 a の所得が λ_a × 恒常所得 + 誤差 で生成されるとき、
λ_a = E[所得 | 年齢 a] / E[所得 | 基準年齢] を年齢セル平均の比で推定し、
観測値を λ_a で割って古典的測定誤差の形に戻す。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np
import pandas as pd

from memobility.config.settings import LifecycleConfig
from memobility.errors import DataException, ErrorCode, create_data_error
from memobility.models import Dataset

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LifecycleProfile:
    """年齢ごとの負荷係数 λ

    Attributes:
        reference_age: λ=1 となる基準年齢
        lambdas: 年齢 → λ の推定値
        counts: 年齢 → セルの観測数
    """
    reference_age: int
    lambdas: Dict[int, float] = field(default_factory=dict)
    counts: Dict[int, int] = field(default_factory=dict)

    def factors(self, ages: Any) -> np.ndarray:
        """各観測の年齢に対応する λ

        Raises:
            DataException: プロファイルに無い年齢がある場合
        """
        ages_arr = np.asarray(ages, dtype=int).ravel()
        missing = sorted(set(ages_arr.tolist()) - set(self.lambdas))
        if missing:
            raise DataException(
                create_data_error(
                    ErrorCode.DATA_MISSING_AGE,
                    f"年齢 {missing[0]} の λ がプロファイルにありません",
                    details={"missing_ages": missing},
                )
            )
        return np.array([self.lambdas[a] for a in ages_arr.tolist()], dtype=float)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "reference_age": self.reference_age,
            "lambdas": {str(a): v for a, v in sorted(self.lambdas.items())},
            "counts": {str(a): c for a, c in sorted(self.counts.items())},
        }


def estimate_lambdas(values: Any, ages: Any, reference_age: int) -> LifecycleProfile:
    """年齢セル平均の比で λ を推定

    Args:
        values: 所得 (水準)
        ages: 観測時の年齢 (整数)
        reference_age: 基準年齢 a*

    Returns:
        LifecycleProfile: λ(a*) = 1 のプロファイル

    Raises:
        DataException: 基準年齢のセルが空、または平均がゼロの場合
    """
    frame = pd.DataFrame({"value": np.asarray(values, dtype=float).ravel(), "age": np.asarray(ages, dtype=int).ravel()})
    cells = frame.groupby("age")["value"].agg(["mean", "count"])
    if reference_age not in cells.index:
        raise DataException(
            create_data_error(
                ErrorCode.DATA_REFERENCE_CELL,
                f"基準年齢 {reference_age} の観測がありません",
                details={"reference_age": reference_age, "ages": [int(a) for a in cells.index]},
            )
        )
    reference_mean = float(cells.loc[reference_age, "mean"])
    if reference_mean == 0.0:
        raise DataException(
            create_data_error(
                ErrorCode.DATA_REFERENCE_CELL,
                f"基準年齢 {reference_age} のセル平均がゼロのため比を定義できません",
                details={"reference_age": reference_age},
            )
        )
    lambdas = {int(a): float(m) / reference_mean for a, m in cells["mean"].items()}
    lambdas[int(reference_age)] = 1.0
    non_positive = sorted(a for a, v in lambdas.items() if v <= 0.0)
    if non_positive:
        raise DataException(
            create_data_error(
                ErrorCode.DATA_INVALID,
                f"年齢 {non_positive[0]} の λ が正ではありません",
                details={"ages": non_positive},
            )
        )
    counts = {int(a): int(c) for a, c in cells["count"].items()}
    logger.debug("lifecycle.lambdas reference_age=%d cells=%d", reference_age, len(lambdas))
    return LifecycleProfile(reference_age=int(reference_age), lambdas=lambdas, counts=counts)


def rescale(values: Any, ages: Any, profile: LifecycleProfile) -> np.ndarray:
    """観測値を年齢に対応する λ で割る"""
    return np.asarray(values, dtype=float).ravel() / profile.factors(ages)


def _rescale_column(
    values: np.ndarray, ages: Optional[np.ndarray], reference_age: Optional[int], logged: bool, name: str
) -> Tuple[np.ndarray, Optional[LifecycleProfile]]:
    if reference_age is None:
        return values, None
    if ages is None:
        raise DataException(
            create_data_error(
                ErrorCode.DATA_MISSING_AGE,
                f"{name} の基準年齢が設定されていますが年齢列がありません",
                details={"variable": name},
            )
        )
    levels = np.exp(values) if logged else values
    profile = estimate_lambdas(levels, ages, reference_age)
    factors = profile.factors(ages)
    rescaled = values - np.log(factors) if logged else values / factors
    return rescaled, profile


def apply_lifecycle(
    dataset: Dataset, config: LifecycleConfig
) -> Tuple[Dataset, Dict[str, LifecycleProfile]]:
    """設定された変数の λ を推定してデータセットを補正

    対数変換済みの列は水準に戻してセル平均を取り、log λ を差し引く。

    Returns:
        Tuple[Dataset, Dict[str, LifecycleProfile]]: 補正後のデータセットと変数別プロファイル
    """
    y, profile_y = _rescale_column(dataset.y, dataset.age_y, config.reference_age_y, dataset.log_y, "y")
    t, profile_t = _rescale_column(dataset.t, dataset.age_t, config.reference_age_t, dataset.log_t, "t")
    profiles = {name: p for name, p in (("y", profile_y), ("t", profile_t)) if p is not None}
    if not profiles:
        return dataset, profiles
    logger.info("lifecycle.applied variables=%s", ",".join(sorted(profiles)))
    return dataset.with_values(y, t), profiles
