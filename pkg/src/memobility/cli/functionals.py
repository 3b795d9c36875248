"""
移動指標の要求と評価

params / bootstrap / report コマンドが共有する。要求された指標を
推定済みモデルから計算し、出力用の表とブートストラップ用のスカラー辞書を返す。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from memobility.core.concurrency import BlockExecutor
from memobility.core.mobility import (
    QUARTILES,
    SimulatedPanel,
    conditional_quantile_curves,
    copula_transition_matrix,
    counterfactual_cdf,
    distributional_treatment_effect,
    observed_panel,
    poverty_curve,
    simulate_panel,
    spearman_rho,
    transition_matrix,
    upward_mobility,
    upward_mobility_by_quartile,
)
from memobility.core.random import RandomStreams
from memobility.models import Dataset, FittedModel
from memobility.output.formatter import (
    Table,
    curve_table,
    scalar_table,
    transition_table,
    upward_table,
)

logger = logging.getLogger(__name__)


@dataclass
class FunctionalRequest:
    """計算する指標の指定

    Attributes:
        transition: 遷移行列を計算するか
        cutoffs: 遷移行列の階級境界
        spearman: Spearman の順位相関を計算するか
        upward: 上方移動確率を計算するか
        gap: 上方移動の幅
        band: 上方移動の親の順位帯 (None なら四分位ごと)
        quantile_curves: 条件付き分位点曲線を計算するか
        taus: 曲線の分位点レベル
        t_grid: 処置変数の格子
        poverty_line: 貧困線 (None なら貧困率を計算しない)
        counterfactual: 反実仮想 CDF を評価する (y, t)
        dte: 分布処置効果を評価する (y, t, t2)
        observed: 観測データの比較表も出すか
    """
    transition: bool = False
    cutoffs: Sequence[float] = QUARTILES
    spearman: bool = False
    upward: bool = False
    gap: float = 0.0
    band: Optional[Tuple[float, float]] = None
    quantile_curves: bool = False
    taus: Sequence[float] = (0.1, 0.25, 0.5, 0.75, 0.9)
    t_grid: Sequence[float] = field(default_factory=list)
    poverty_line: Optional[float] = None
    counterfactual: Optional[Tuple[float, float]] = None
    dte: Optional[Tuple[float, float, float]] = None
    observed: bool = False

    @property
    def needs_panel(self) -> bool:
        return self.transition or self.upward or (self.spearman and self.observed)

    def is_empty(self) -> bool:
        return not (
            self.transition
            or self.spearman
            or self.upward
            or self.quantile_curves
            or self.poverty_line is not None
            or self.counterfactual is not None
            or self.dte is not None
        )


def _upward(panel: SimulatedPanel, request: FunctionalRequest):
    if request.band is None:
        return upward_mobility_by_quartile(panel, request.gap)
    return [upward_mobility(panel, request.gap, *request.band)]


def default_t_grid(dataset: Dataset, points: int = 9) -> List[float]:
    return np.quantile(dataset.t, np.linspace(0.1, 0.9, points)).tolist()


def copula_transition_table(model: FittedModel, cutoffs: Sequence[float] = QUARTILES) -> Table:
    """コピュラから直接計算した遷移行列の表

    コピュラは X を条件とする順位の依存構造なので、切片のみのモデルでなければ
    X で条件付けた遷移行列として出力する。
    """
    matrix = copula_transition_matrix(model.copula, cutoffs)
    if model.qp_y.coefficients.shape[1] == 1 and model.qp_t.coefficients.shape[1] == 1:
        return transition_table(matrix, "transition_matrix_copula", "Transition matrix implied by the copula")
    return transition_table(
        matrix, "transition_matrix_copula_given_x", "Transition matrix of the copula conditional on X"
    )


def evaluate_functionals(
    request: FunctionalRequest,
    model: FittedModel,
    dataset: Dataset,
    streams: RandomStreams,
    draws: int,
    executor: Optional[BlockExecutor] = None,
) -> Tuple[Dict[str, float], List[Table]]:
    """要求された指標を計算

    Args:
        request: 指標の指定
        model: 推定済みモデル
        dataset: 共変量分布とパネル生成に使う (補正後の) データ
        streams: パネル生成用の乱数ストリーム群
        draws: 観測1件あたりのパネル抽出数
        executor: パネル生成の並列実行器

    Returns:
        Tuple[Dict[str, float], List[Table]]: 名前付きスカラー値と出力用の表
    """
    scalars: Dict[str, float] = {"copula_parameter": model.copula.parameter}
    tables: List[Table] = []

    panel = simulate_panel(model, dataset, draws, streams.child("panel"), executor) if request.needs_panel else None
    observed = observed_panel(dataset) if request.observed else None

    if request.transition:
        matrix = transition_matrix(panel, request.cutoffs)
        tables.append(transition_table(matrix, "transition_matrix", "Transition matrix (measurement-error corrected)"))
        for i in range(matrix.bins):
            for j in range(matrix.bins):
                scalars[f"tm[{i + 1},{j + 1}]"] = float(matrix.cells[i, j])
        if observed is not None:
            tables.append(
                transition_table(transition_matrix(observed, request.cutoffs), "transition_matrix_observed", "Transition matrix (observed data)")
            )

    if request.spearman:
        rho = spearman_rho(model.copula)
        scalars["spearman_rho"] = rho
        values = {"spearman_rho": rho}
        if observed is not None:
            values["spearman_rho_observed"] = spearman_rho(observed)
        tables.append(scalar_table(values, "spearman", "Rank-rank correlation"))

    if request.upward:
        results = _upward(panel, request)
        tables.append(upward_table(results, "upward_mobility", "Upward mobility (measurement-error corrected)"))
        for r in results:
            scalars[f"upward[{r.s1:g},{r.s2:g}]"] = r.estimator
        if observed is not None:
            tables.append(upward_table(_upward(observed, request), "upward_mobility_observed", "Upward mobility (observed data)"))

    t_grid = list(request.t_grid) or default_t_grid(dataset)
    if request.quantile_curves:
        x_mean = dataset.x.mean(axis=0)
        curves = conditional_quantile_curves(model, request.taus, t_grid, x_mean)
        series = {f"q{tau:g}": curves[i] for i, tau in enumerate(request.taus)}
        tables.append(curve_table("t", t_grid, series, "quantile_curves", "Conditional quantiles of the outcome"))
        for i, tau in enumerate(request.taus):
            for j, t in enumerate(t_grid):
                scalars[f"q{tau:g}|t={t:g}"] = float(curves[i, j])

    if request.poverty_line is not None:
        rates = poverty_curve(model, request.poverty_line, t_grid, dataset)
        tables.append(curve_table("t", t_grid, {"poverty_rate": rates}, "poverty_curve", f"Poverty rate below {request.poverty_line:g}"))
        for t, rate in zip(t_grid, rates):
            scalars[f"poverty|t={t:g}"] = float(rate)

    if request.counterfactual is not None:
        y, t = request.counterfactual
        value = counterfactual_cdf(model, y, t, dataset)
        scalars["counterfactual_cdf"] = value
        tables.append(scalar_table({f"F(y={y:g}|t={t:g})": value}, "counterfactual", "Counterfactual distribution"))

    if request.dte is not None:
        y, t, t_alt = request.dte
        value = distributional_treatment_effect(model, y, t, t_alt, dataset)
        scalars["dte"] = value
        tables.append(scalar_table({f"F(y={y:g}|t={t:g}) - F(y={y:g}|t={t_alt:g})": value}, "dte", "Distributional treatment effect"))

    logger.debug("functionals.evaluated statistics=%d tables=%d", len(scalars), len(tables))
    return scalars, tables
