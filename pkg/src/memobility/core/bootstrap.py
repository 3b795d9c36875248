"""
経験ブートストラップ

行を復元抽出した再標本ごとに統計量 (通常は全推定のやり直しを含む) を評価し、
標準誤差とパーセンタイル区間を求める。複製 r の再標本添字は
ストリーム (seed, "boot", r) から引くため、実行順序に依存しない。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from memobility.core.concurrency import BlockExecutor
from memobility.core.pipeline import Statistic
from memobility.core.random import RandomStreams, seeded_rng
from memobility.errors import (
    ConvergenceException,
    ErrorCode,
    MobilityException,
    create_estimation_error,
)
from memobility.models import Dataset

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    """1つの統計量のブートストラップ結果

    Attributes:
        name: 統計量名
        estimate: 元データでの点推定値
        replicates: 有効な複製の値
        standard_error: 複製の標準偏差 (ddof=1)
        interval: パーセンタイル区間 (α/2, 1-α/2)
        alpha: 区間の有意水準
        dropped: 失敗して棄却した複製数
    """
    name: str
    estimate: float
    replicates: np.ndarray
    standard_error: float
    interval: Tuple[float, float]
    alpha: float
    dropped: int = 0

    @property
    def effective(self) -> int:
        return int(self.replicates.size)

    @property
    def reps(self) -> int:
        return self.effective + self.dropped

    def to_dict(self) -> Dict[str, object]:
        return {
            "name": self.name,
            "estimate": self.estimate,
            "standard_error": self.standard_error,
            "interval": list(self.interval),
            "interval_type": "percentile",
            "alpha": self.alpha,
            "effective_reps": self.effective,
            "dropped": self.dropped,
        }


def resample_indices(seed: int, replicate: int, n: int) -> np.ndarray:
    """複製 replicate の再標本添字"""
    return seeded_rng(seed, "boot", replicate).integers(0, n, size=n)


def bootstrap(
    dataset: Dataset,
    statistic: Statistic,
    reps: int,
    seed: int,
    alpha: float = 0.05,
    executor: Optional[BlockExecutor] = None,
    max_drop_fraction: float = 0.2,
    point_estimate: Optional[Mapping[str, float]] = None,
) -> Dict[str, BootstrapResult]:
    """ブートストラップ標準誤差とパーセンタイル区間を計算

    Args:
        dataset: 元データ
        statistic: (データセット, 乱数ストリーム群) → {統計量名: 値}
        reps: 複製数 B (2以上)
        seed: シード
        alpha: 区間の有意水準
        executor: 複製の並列実行器
        max_drop_fraction: 棄却を許す複製の割合の上限
        point_estimate: 計算済みの点推定値 (省略時は元データで評価)

    Returns:
        Dict[str, BootstrapResult]: 統計量名ごとの結果

    Raises:
        ValueError: reps < 2 の場合
        ConvergenceException: 棄却した複製が上限を超えた場合
    """
    if reps < 2:
        raise ValueError("ブートストラップの複製数は2以上である必要があります")
    runner = executor or BlockExecutor()
    streams = RandomStreams(seed)
    point = dict(point_estimate) if point_estimate is not None else dict(statistic(dataset, streams.child("point")))

    def replicate(r: int) -> Optional[Mapping[str, float]]:
        indices = resample_indices(seed, r, dataset.n)
        try:
            return statistic(dataset.take(indices), streams.child(f"boot-fit/{r}"))
        except MobilityException as exc:
            logger.warning("bootstrap.replicate_dropped replicate=%d reason=%s", r, exc)
            return None

    outcomes: List[Optional[Mapping[str, float]]] = runner.map_ordered(replicate, list(range(reps)))
    kept = [o for o in outcomes if o is not None]
    dropped = reps - len(kept)
    if dropped > max_drop_fraction * reps:
        raise ConvergenceException(
            create_estimation_error(
                ErrorCode.ESTIMATION_TOO_MANY_FAILURES,
                f"ブートストラップ複製 {dropped}/{reps} が失敗しました",
                details={"dropped": dropped, "reps": reps},
            )
        )

    results: Dict[str, BootstrapResult] = {}
    for name, estimate in point.items():
        values = np.array([o[name] for o in kept], dtype=float)
        se = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
        low, high = np.quantile(values, [alpha / 2.0, 1.0 - alpha / 2.0]) if values.size else (np.nan, np.nan)
        results[name] = BootstrapResult(
            name=name,
            estimate=float(estimate),
            replicates=values,
            standard_error=se,
            interval=(float(low), float(high)),
            alpha=alpha,
            dropped=dropped,
        )
    logger.info("bootstrap.finished reps=%d effective=%d statistics=%d", reps, len(kept), len(results))
    return results
