"""
移動指標

推定済みモデルから条件付き分布・反実仮想分布・貧困率・遷移行列・上方移動確率・
順位相関を計算する。閉形式で書けるものはコピュラから直接、無条件コピュラを要する
ものはモデルから生成したシミュレーションパネルの経験順位で評価する。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.optimize import brentq
from scipy.stats import rankdata

from memobility.core.concurrency import BlockExecutor
from memobility.core.copula import make_copula
from memobility.core.quantile_regression import ConditionalQuantileTable
from memobility.core.random import RandomStreams
from memobility.errors import (
    DataException,
    DomainException,
    ErrorCode,
    create_data_error,
    create_numeric_error,
)
from memobility.models import CopulaSpec, Dataset, FittedModel

logger = logging.getLogger(__name__)

QUARTILES = (0.25, 0.5, 0.75)
QUADRATURE_POINTS = 256


@dataclass(frozen=True, eq=False)
class SimulatedPanel:
    """モデルから生成した (Y*, T*) のパネル

    Attributes:
        y_star: n×S の結果変数 (子) の抽出値
        t_star: n×S の処置変数 (親) の抽出値
        rows: n×S の各抽出が属する観測の添字
    """
    y_star: np.ndarray
    t_star: np.ndarray
    rows: np.ndarray

    @property
    def draws(self) -> int:
        return int(self.y_star.shape[1]) if self.y_star.ndim == 2 else 0

    @property
    def size(self) -> int:
        return int(self.y_star.size)

    def ranks(self) -> Tuple[np.ndarray, np.ndarray]:
        """パネル全体での (子の順位, 親の順位) を平均順位 / N で返す"""
        if self.size == 0:
            raise DataException(
                create_data_error(ErrorCode.DATA_EMPTY, "パネルが空です")
            )
        size = self.size
        child = rankdata(self.y_star.ravel(), method="average") / size
        parent = rankdata(self.t_star.ravel(), method="average") / size
        return child, parent


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """遷移行列

    Attributes:
        cutoffs: 階級境界の順位 (狭義単調増加)
        cells: cells[i, j] = P(子が階級 i | 親が階級 j)
        parent_counts: 親の各階級の抽出数 (閉形式評価では None)
    """
    cutoffs: np.ndarray
    cells: np.ndarray
    parent_counts: Optional[np.ndarray] = None

    @property
    def bins(self) -> int:
        return int(self.cells.shape[0])

    def column_sums(self) -> np.ndarray:
        return self.cells.sum(axis=0)

    def labels(self) -> List[str]:
        edges = [0.0, *self.cutoffs.tolist(), 1.0]
        return [f"{lo:g}-{hi:g}" for lo, hi in zip(edges, edges[1:])]


@dataclass(frozen=True)
class UpwardMobility:
    """上方移動確率

    Attributes:
        s1, s2: 親の順位帯
        gap: 子の順位が親の順位を上回る幅
        estimator: 該当抽出数 / (N (s2 - s1))
        conditional: 該当抽出数 / 親が順位帯に入る抽出数
    """
    s1: float
    s2: float
    gap: float
    estimator: float
    conditional: float


def _check_cutoffs(cutoffs: Sequence[float]) -> np.ndarray:
    arr = np.asarray(cutoffs, dtype=float)
    if arr.ndim != 1 or arr.size == 0 or np.any(arr <= 0.0) or np.any(arr >= 1.0) or np.any(np.diff(arr) <= 0.0):
        raise DomainException(
            create_numeric_error(
                ErrorCode.NUMERIC_DOMAIN,
                "cutoffs は (0,1) 内の狭義単調増加列である必要があります",
                details={"cutoffs": list(map(float, np.atleast_1d(arr)))},
            )
        )
    return arr


def simulate_panel(
    model: FittedModel,
    dataset: Dataset,
    draws: int,
    rng: Union[np.random.Generator, RandomStreams],
    executor: Optional[BlockExecutor] = None,
) -> SimulatedPanel:
    """推定済みモデルから各観測につき draws 組の (Y*, T*) を生成

    (V_Y, V_T) を推定コピュラから抽出し、Y* = Q_Y(V_Y|x_i), T* = Q_T(V_T|x_i) とする。
    rng に RandomStreams を渡すと観測ブロックごとのストリームで生成し、
    結果は並列数に依存しない。
    """
    n = dataset.n
    if draws <= 0 or n == 0:
        empty = np.empty((n, 0))
        return SimulatedPanel(empty, empty.copy(), np.empty((n, 0), dtype=int))
    copula = make_copula(model.copula)

    def simulate_block(indices: np.ndarray, generator: np.random.Generator):
        rows = np.repeat(indices, draws)
        x_rows = dataset.x[rows]
        v_y, v_t = copula.sample(rows.size, generator)
        y_star = ConditionalQuantileTable(model.qp_y, x_rows).quantile(v_y)
        t_star = ConditionalQuantileTable(model.qp_t, x_rows).quantile(v_t)
        return y_star.reshape(-1, draws), t_star.reshape(-1, draws)

    if isinstance(rng, RandomStreams):
        runner = executor or BlockExecutor()
        parts = runner.map_blocks(simulate_block, n, rng, "panel")
    else:
        parts = [simulate_block(np.arange(n), rng)]
    y_star = np.vstack([p[0] for p in parts])
    t_star = np.vstack([p[1] for p in parts])
    rows = np.repeat(np.arange(n)[:, None], draws, axis=1)
    logger.debug("panel.simulated n=%d draws=%d family=%s", n, draws, model.copula.family.value)
    return SimulatedPanel(y_star, t_star, rows)


def observed_panel(dataset: Dataset) -> SimulatedPanel:
    """観測値 (Y, T) をそのまま1抽出のパネルとして扱う"""
    return SimulatedPanel(
        dataset.y[:, None].copy(), dataset.t[:, None].copy(), np.arange(dataset.n)[:, None]
    )


def _treatment_rank(model: FittedModel, t: Any, x: np.ndarray) -> np.ndarray:
    """F_T(t|x) を格子の範囲 [τ_1, τ_L] に丸める (台の外なら警告)"""
    rank = ConditionalQuantileTable(model.qp_t, x).cdf(t)
    outside = (rank <= 0.0) | (rank >= 1.0)
    if np.any(outside):
        logger.warning("mobility.treatment_clamped count=%d", int(outside.sum()))
    grid = model.qp_t.grid
    return np.clip(rank, grid.low, grid.high)


def _is_scalar(*values: Any, x: Any) -> bool:
    return all(np.ndim(v) == 0 for v in values) and np.ndim(x) <= 1


def conditional_outcome_cdf(model: FittedModel, y: Any, t: Any, x: Any) -> Any:
    """F_{Y*|T*,X}(y|t,x) = C₂(F_Y(y|x), F_T(t|x))"""
    x_arr = np.atleast_2d(np.asarray(x, dtype=float))
    rank_y = ConditionalQuantileTable(model.qp_y, x_arr).cdf(y)
    rank_t = _treatment_rank(model, t, x_arr)
    out = np.asarray(make_copula(model.copula).hfun(*np.broadcast_arrays(rank_y, rank_t)), dtype=float)
    return float(out.ravel()[0]) if _is_scalar(y, t, x=x) else out


def conditional_outcome_quantile(model: FittedModel, tau: Any, t: Any, x: Any) -> Any:
    """Q_{Y*|T*,X}(τ|t,x) = Q_Y(C₂⁻¹(τ; F_T(t|x)) | x)"""
    x_arr = np.atleast_2d(np.asarray(x, dtype=float))
    rank_t = _treatment_rank(model, t, x_arr)
    level = np.asarray(make_copula(model.copula).inv_hfun(*np.broadcast_arrays(np.asarray(tau, dtype=float), rank_t)))
    out = ConditionalQuantileTable(model.qp_y, x_arr).quantile(np.atleast_1d(level))
    return float(out.ravel()[0]) if _is_scalar(tau, t, x=x) else out


def counterfactual_cdf(model: FittedModel, y: float, t: float, dataset: Dataset) -> float:
    """共変量分布で平均した F_{Y*|T*}(y|t) (用量反応分布)"""
    values = conditional_outcome_cdf(model, float(y), float(t), dataset.x)
    return float(np.mean(values))


def counterfactual_quantile(model: FittedModel, tau: float, t: float, dataset: Dataset) -> float:
    """counterfactual_cdf の y に関する逆関数 (区間を狭める求根)"""
    if not 0.0 < tau < 1.0:
        raise DomainException(
            create_numeric_error(ErrorCode.NUMERIC_DOMAIN, f"tau={tau} は (0,1) 内である必要があります")
        )
    support = model.qp_y.rearranged_values(dataset.x)
    low = float(support[:, 0].min()) - 1.0
    high = float(support[:, -1].max())
    if counterfactual_cdf(model, high, t, dataset) < tau:
        return high
    return float(brentq(lambda y: counterfactual_cdf(model, y, t, dataset) - tau, low, high, xtol=1e-10))


def distributional_treatment_effect(
    model: FittedModel, y: float, t: float, t_alt: float, dataset: Dataset
) -> float:
    """F(y|t) - F(y|t_alt) (反実仮想分布の差)"""
    return counterfactual_cdf(model, y, t, dataset) - counterfactual_cdf(model, y, t_alt, dataset)


def quantile_treatment_effect(
    model: FittedModel, tau: float, t: float, t_alt: float, dataset: Dataset
) -> float:
    """Q(τ|t_alt) - Q(τ|t) (反実仮想分位点の差)"""
    return counterfactual_quantile(model, tau, t_alt, dataset) - counterfactual_quantile(model, tau, t, dataset)


def poverty_rate(
    model: FittedModel,
    poverty_line: float,
    t: float,
    x: Optional[Any] = None,
    dataset: Optional[Dataset] = None,
) -> float:
    """親の所得 t の下で子の所得が貧困線を下回る確率

    dataset を渡すと共変量で平均し、x を渡すとその共変量での条件付き確率を返す。
    """
    if dataset is not None:
        return counterfactual_cdf(model, poverty_line, t, dataset)
    if x is None:
        raise ValueError("x または dataset のいずれかが必要です")
    return float(np.mean(conditional_outcome_cdf(model, poverty_line, t, x)))


def poverty_curve(model: FittedModel, poverty_line: float, t_grid: Sequence[float], dataset: Dataset) -> np.ndarray:
    """t の格子上の貧困率"""
    return np.array([poverty_rate(model, poverty_line, float(t), dataset=dataset) for t in t_grid])


def conditional_quantile_curves(
    model: FittedModel, taus: Sequence[float], t_grid: Sequence[float], x: Any
) -> np.ndarray:
    """条件付き分位点 Q(τ|t,x) の表 (行が τ、列が t)

    x は共変量1行に限る。共変量分布で平均した分位点は counterfactual_quantile を使う。

    Raises:
        ValueError: x が複数行の場合
    """
    row = np.asarray(x, dtype=float)
    if row.ndim > 1 and row.shape[0] != 1:
        raise ValueError(
            f"x は共変量1行である必要があります ({row.shape[0]} 行)。平均化には counterfactual_quantile を使ってください"
        )
    row = row.reshape(-1)
    return np.array(
        [[conditional_outcome_quantile(model, float(tau), float(t), row) for t in t_grid] for tau in taus]
    )


def transition_matrix(panel: SimulatedPanel, cutoffs: Sequence[float] = QUARTILES) -> TransitionMatrix:
    """パネルの経験コピュラから遷移行列を計算

    順位 R = 平均順位 / N を (r_{k-1}, r_k] の階級に割り当て、親の階級ごとに
    子の階級の相対度数を求める。

    Raises:
        DomainException: 親の階級が空の場合
    """
    edges = _check_cutoffs(cutoffs)
    child, parent = panel.ranks()
    child_bin = np.searchsorted(edges, child, side="left")
    parent_bin = np.searchsorted(edges, parent, side="left")
    bins = edges.size + 1
    counts = np.zeros((bins, bins))
    np.add.at(counts, (child_bin, parent_bin), 1.0)
    parent_counts = counts.sum(axis=0)
    if np.any(parent_counts == 0):
        raise DomainException(
            create_numeric_error(
                ErrorCode.NUMERIC_UNDEFINED,
                "親の階級に該当する抽出がありません",
                details={"parent_counts": parent_counts.tolist()},
            )
        )
    return TransitionMatrix(edges, counts / parent_counts, parent_counts)


def copula_transition_matrix(spec: CopulaSpec, cutoffs: Sequence[float] = QUARTILES) -> TransitionMatrix:
    """コピュラの CDF から遷移行列を直接評価

    cells[i, j] = [C(r_{i+1}, s_{j+1}) - C(r_i, s_{j+1}) - C(r_{i+1}, s_j) + C(r_i, s_j)] / (s_{j+1} - s_j)
    """
    edges = _check_cutoffs(cutoffs)
    grid = np.concatenate([[0.0], edges, [1.0]])
    u, v = np.meshgrid(grid, grid, indexing="ij")
    c = np.asarray(make_copula(spec).cdf(u, v), dtype=float)
    mass = c[1:, 1:] - c[:-1, 1:] - c[1:, :-1] + c[:-1, :-1]
    return TransitionMatrix(edges, mass / np.diff(grid)[None, :])


def upward_mobility(panel: SimulatedPanel, gap: float = 0.0, s1: float = 0.0, s2: float = 1.0) -> UpwardMobility:
    """親の順位が [s1, s2] のとき子の順位が親の順位 + gap を上回る確率"""
    if not 0.0 <= s1 < s2 <= 1.0:
        raise DomainException(
            create_numeric_error(
                ErrorCode.NUMERIC_DOMAIN,
                f"順位帯 [{s1}, {s2}] は 0 ≤ s1 < s2 ≤ 1 を満たす必要があります",
            )
        )
    child, parent = panel.ranks()
    in_band = (parent >= s1) & (parent <= s2)
    hits = float(np.sum((child > parent + gap) & in_band))
    band_count = float(in_band.sum())
    estimator = hits / (child.size * (s2 - s1))
    conditional = hits / band_count if band_count else float("nan")
    return UpwardMobility(s1=s1, s2=s2, gap=gap, estimator=estimator, conditional=conditional)


def upward_mobility_by_quartile(panel: SimulatedPanel, gap: float = 0.0) -> List[UpwardMobility]:
    """親の四分位ごとの上方移動確率"""
    edges = [0.0, *QUARTILES, 1.0]
    return [upward_mobility(panel, gap, lo, hi) for lo, hi in zip(edges, edges[1:])]


def _gauss_legendre_unit(points: int):
    nodes, weights = np.polynomial.legendre.leggauss(points)
    return 0.5 * (nodes + 1.0), 0.5 * weights


def spearman_rho(source: Union[SimulatedPanel, CopulaSpec]) -> float:
    """Spearman の順位相関

    パネルなら順位の相関係数、CopulaSpec なら 12∬C(u,v)dudv - 3 を
    256 点のテンソル積 Gauss-Legendre 求積で評価する。

    Raises:
        DomainException: パネルの一方の列が定数の場合
    """
    if isinstance(source, CopulaSpec):
        nodes, weights = _gauss_legendre_unit(QUADRATURE_POINTS)
        u, v = np.meshgrid(nodes, nodes, indexing="ij")
        c = np.asarray(make_copula(source).cdf(u, v), dtype=float)
        return float(12.0 * weights @ c @ weights - 3.0)

    if source.size == 0 or np.ptp(source.y_star) == 0.0 or np.ptp(source.t_star) == 0.0:
        raise DomainException(
            create_numeric_error(ErrorCode.NUMERIC_UNDEFINED, "定数列の順位相関は定義されません")
        )
    child, parent = source.ranks()
    return float(np.corrcoef(child, parent)[0, 1])


def naive_ige(dataset: Dataset) -> float:
    """log Y の log T への最小二乗の傾き (記述統計)"""
    log_y = dataset.y if dataset.log_y else _safe_log(dataset.y, "y")
    log_t = dataset.t if dataset.log_t else _safe_log(dataset.t, "t")
    if np.ptp(log_t) == 0.0:
        raise DomainException(
            create_numeric_error(ErrorCode.NUMERIC_UNDEFINED, "処置変数が定数のため傾きは定義されません")
        )
    slope, _ = np.polyfit(log_t, log_y, 1)
    return float(slope)


def _safe_log(values: np.ndarray, name: str) -> np.ndarray:
    if np.any(values <= 0.0):
        raise DataException(
            create_data_error(ErrorCode.DATA_INVALID, f"{name} に非正の値があるため対数を取れません")
        )
    return np.log(values)


def summary_by_parent_quartile(dataset: Dataset) -> pd.DataFrame:
    """親の所得の四分位ごとの各変数の平均"""
    frame = pd.DataFrame({"y": dataset.y, "t": dataset.t})
    for j, name in enumerate(dataset.covariate_names[1:], start=1):
        frame[name] = dataset.x[:, j]
    if dataset.age_y is not None:
        frame["age_y"] = dataset.age_y
    if dataset.age_t is not None:
        frame["age_t"] = dataset.age_t
    quartile = pd.qcut(frame["t"].rank(method="first"), 4, labels=[1, 2, 3, 4])
    summary = frame.groupby(quartile, observed=True).mean()
    summary["count"] = frame.groupby(quartile, observed=True).size()
    summary.index.name = "parent_quartile"
    return summary
