"""
モンテカルロ実験

既知の係数曲線とコピュラからデータを生成し、測定誤差を考慮した推定量と
素朴な推定量の RMSE を比較する。

    Y* = (1 + 3τ - τ²) + exp(τ) X           (τ = V_Y)
    T* = (1 + √τ) + 0.1 exp(τ) X            (τ = V_T)
    Y = Y* + U_Y,  T = T* + U_T,  U ~ N(0, σ²),  X ~ U[0,1]
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from memobility.config.settings import MobilitySettings
from memobility.core.concurrency import BlockExecutor
from memobility.core.copula import copula_sample, make_copula
from memobility.core.mobility import (
    SimulatedPanel,
    observed_panel,
    poverty_rate,
    simulate_panel,
    transition_matrix,
)
from memobility.core.pipeline import EstimationPipeline
from memobility.core.quantile_regression import ConditionalQuantileTable, fit_process
from memobility.core.random import RandomStreams, seeded_rng
from memobility.errors import (
    ConvergenceException,
    ErrorCode,
    MobilityException,
    create_estimation_error,
)
from memobility.models import CopulaSpec, Dataset, FittedModel, TauGrid

logger = logging.getLogger(__name__)

RMSE_KNOTS = TauGrid.uniform(10, 0.02, 0.98)
POVERTY_LEVEL = 0.1
CONDITIONING_LEVEL = 0.5
COVARIATE_POINT = 0.5
TRUTH_SAMPLE_SIZE = 200_000
TRUTH_SEED = 20_240_601
COVARIATE_NODES = 201

METRICS = (
    "qr_me", "qr_naive",
    "copula_me", "copula_naive",
    "tm_me", "tm_naive", "tm_observed",
    "poverty_me", "poverty_naive", "poverty_qr",
)


def outcome_coefficients(tau) -> np.ndarray:
    """結果変数の (切片, 傾き) 曲線"""
    tau_arr = np.asarray(tau, dtype=float)
    return np.stack([1.0 + 3.0 * tau_arr - tau_arr ** 2, np.exp(tau_arr)], axis=-1)


def treatment_coefficients(tau) -> np.ndarray:
    """処置変数の (切片, 傾き) 曲線"""
    tau_arr = np.asarray(tau, dtype=float)
    return np.stack([1.0 + np.sqrt(tau_arr), 0.1 * np.exp(tau_arr)], axis=-1)


def poverty_line() -> float:
    """X=0.5 における結果変数の 10% 分位点"""
    b = outcome_coefficients(POVERTY_LEVEL)
    return float(b[0] + b[1] * COVARIATE_POINT)


def conditioning_point() -> float:
    """X=0.5 における処置変数の中央値"""
    b = treatment_coefficients(CONDITIONING_LEVEL)
    return float(b[0] + b[1] * COVARIATE_POINT)


@dataclass(frozen=True)
class McDesign:
    """実験設定の1セル

    Attributes:
        n: 標本サイズ (10以上)
        copula: データ生成に使うコピュラ
        sigma: 測定誤差の標準偏差 (正)
        reps: 複製数
    """
    n: int
    copula: CopulaSpec
    sigma: float
    reps: int = 100

    def __post_init__(self) -> None:
        if self.n < 10:
            raise ValueError("n は10以上である必要があります")
        if not self.sigma > 0.0:
            raise ValueError("sigma は正である必要があります")
        if self.reps < 1:
            raise ValueError("reps は1以上である必要があります")

    @property
    def label(self) -> str:
        return f"{self.copula.family.value}-{self.copula.parameter:g}-n{self.n}-sigma{self.sigma:g}"


@dataclass(frozen=True, eq=False)
class LatentTruth:
    """採点専用の潜在変数 (推定量には渡さない)"""
    y_star: np.ndarray
    t_star: np.ndarray
    v_y: np.ndarray
    v_t: np.ndarray


@dataclass(frozen=True, eq=False)
class McSample:
    """生成データ: 推定に渡す観測データと採点用の潜在値"""
    dataset: Dataset
    truth: LatentTruth


def generate(design: McDesign, rng: np.random.Generator) -> McSample:
    """設定に従ってデータを生成"""
    n = design.n
    x = rng.uniform(size=n)
    v_y, v_t = copula_sample(design.copula, n, rng)
    b_y = outcome_coefficients(v_y)
    b_t = treatment_coefficients(v_t)
    y_star = b_y[:, 0] + b_y[:, 1] * x
    t_star = b_t[:, 0] + b_t[:, 1] * x
    y = y_star + rng.normal(0.0, design.sigma, size=n)
    t = t_star + rng.normal(0.0, design.sigma, size=n)
    dataset = Dataset(
        y=y, t=t, x=np.column_stack([np.ones(n), x]), covariate_names=("intercept", "x")
    )
    return McSample(dataset=dataset, truth=LatentTruth(y_star, t_star, v_y, v_t))


def _true_rank(coefficients, value: float, x: float) -> float:
    def gap(tau: float) -> float:
        b = coefficients(tau)
        return float(b[0] + b[1] * x) - value

    if gap(0.0) >= 0.0:
        return 0.0
    if gap(1.0) <= 0.0:
        return 1.0
    return float(brentq(gap, 0.0, 1.0, xtol=1e-12))


@dataclass(frozen=True, eq=False)
class TrueTargets:
    """設定ごとの真値"""
    outcome: np.ndarray
    transition: np.ndarray
    poverty: float
    copula_parameter: float


def true_targets(design: McDesign) -> TrueTargets:
    """係数・遷移行列・貧困率の真値

    遷移行列は大標本の潜在変数の経験順位から、貧困率は X の格子上で
    C₂(F_Y(貧困線|x), F_T(t0|x)) を平均して求める。
    """
    latent = generate(
        McDesign(TRUTH_SAMPLE_SIZE, design.copula, design.sigma, reps=1),
        seeded_rng(TRUTH_SEED, f"truth/{design.copula.family.value}/{design.copula.parameter:g}"),
    ).truth
    panel = SimulatedPanel(latent.y_star[:, None], latent.t_star[:, None], np.arange(TRUTH_SAMPLE_SIZE)[:, None])
    transition = transition_matrix(panel).cells

    copula = make_copula(design.copula)
    line, t0 = poverty_line(), conditioning_point()
    nodes = (np.arange(COVARIATE_NODES) + 0.5) / COVARIATE_NODES
    rates = [
        float(copula.hfun(_true_rank(outcome_coefficients, line, x), _true_rank(treatment_coefficients, t0, x)))
        for x in nodes
    ]
    return TrueTargets(
        outcome=outcome_coefficients(RMSE_KNOTS.knots),
        transition=transition,
        poverty=float(np.mean(rates)),
        copula_parameter=design.copula.parameter,
    )


def qr_poverty_rate(dataset: Dataset, line: float, t0: float, grid: Optional[TauGrid] = None) -> float:
    """T を説明変数に加えた分位点回帰を t0 で反転した貧困率 (測定誤差を無視)"""
    tau_grid = grid or TauGrid.default()
    design = np.column_stack([dataset.x[:, :1], dataset.t, dataset.x[:, 1:]])
    qp = fit_process(dataset.y, design, tau_grid)
    rows = np.column_stack([dataset.x[:, :1], np.full(dataset.n, t0), dataset.x[:, 1:]])
    return float(np.mean(ConditionalQuantileTable(qp, rows).cdf(line)))


def _estimate_errors(
    model: FittedModel, naive: FittedModel, sample: McSample, targets: TrueTargets,
    settings: MobilitySettings, streams: RandomStreams,
) -> Dict[str, np.ndarray]:
    dataset = sample.dataset
    line, t0 = poverty_line(), conditioning_point()
    knots = RMSE_KNOTS.knots
    draws = settings.panel.draws
    panel_me = simulate_panel(model, dataset, draws, streams.stream("panel-me"))
    panel_naive = simulate_panel(naive, dataset, draws, streams.stream("panel-naive"))
    return {
        "qr_me": (model.qp_y.beta(knots) - targets.outcome).ravel(),
        "qr_naive": (naive.qp_y.beta(knots) - targets.outcome).ravel(),
        "copula_me": np.array([model.copula.parameter - targets.copula_parameter]),
        "copula_naive": np.array([naive.copula.parameter - targets.copula_parameter]),
        "tm_me": (transition_matrix(panel_me).cells - targets.transition).ravel(),
        "tm_naive": (transition_matrix(panel_naive).cells - targets.transition).ravel(),
        "tm_observed": (transition_matrix(observed_panel(dataset)).cells - targets.transition).ravel(),
        "poverty_me": np.array([poverty_rate(model, line, t0, dataset=dataset) - targets.poverty]),
        "poverty_naive": np.array([poverty_rate(naive, line, t0, dataset=dataset) - targets.poverty]),
        "poverty_qr": np.array([qr_poverty_rate(dataset, line, t0, settings.qr.grid()) - targets.poverty]),
    }


def aggregate_rmse(errors: Sequence[np.ndarray]) -> float:
    """複製ごとに二乗誤差をパラメータで平均し、複製間の平均の平方根を取る"""
    if not errors:
        return float("nan")
    per_replication = [float(np.mean(np.square(e))) for e in errors]
    return float(np.sqrt(np.mean(per_replication)))


@dataclass
class StudyRow:
    """設定1セル分の RMSE"""
    design: McDesign
    rmse: Dict[str, float] = field(default_factory=dict)
    replications: int = 0
    failed: int = 0


@dataclass
class StudyResult:
    """実験全体の結果"""
    rows: List[StudyRow] = field(default_factory=list)

    def headers(self) -> List[str]:
        return ["family", "parameter", "n", "sigma", "reps", "failed", *METRICS]

    def table(self) -> List[List[object]]:
        return [
            [
                row.design.copula.family.value, row.design.copula.parameter, row.design.n,
                row.design.sigma, row.replications, row.failed,
                *(round(row.rmse.get(m, float("nan")), 6) for m in METRICS),
            ]
            for row in self.rows
        ]


def run_study(
    designs: Sequence[McDesign],
    seed: int,
    settings: Optional[MobilitySettings] = None,
    executor: Optional[BlockExecutor] = None,
) -> StudyResult:
    """各設定で複製を回し RMSE 表を作る

    複製はそれぞれ (seed, 設定ラベル, 複製番号) のストリームで独立に実行する。
    失敗した複製は数えて除外し、全て失敗した設定は例外とする。
    """
    base = settings or MobilitySettings()
    runner = executor or BlockExecutor(base.workers)
    result = StudyResult()
    for design in designs:
        cell_settings = base.model_copy(update={"copula_family": design.copula.family.value})
        pipeline = EstimationPipeline(cell_settings, BlockExecutor(1, base.block_size))
        targets = true_targets(design)
        cell_streams = RandomStreams(seed).child(design.label)
        logger.info("mc.design_start design=%s reps=%d", design.label, design.reps)

        def replicate(r: int) -> Optional[Dict[str, np.ndarray]]:
            streams = cell_streams.child(f"rep{r}")
            sample = generate(design, streams.stream("data"))
            try:
                model = pipeline.fit(sample.dataset, streams.child("fit"))
                naive = pipeline.fit_naive(sample.dataset)
                return _estimate_errors(model, naive, sample, targets, cell_settings, streams)
            except MobilityException as exc:
                logger.warning("mc.replicate_failed design=%s replicate=%d reason=%s", design.label, r, exc)
                return None

        outcomes = runner.map_ordered(replicate, list(range(design.reps)))
        kept = [o for o in outcomes if o is not None]
        if not kept:
            raise ConvergenceException(
                create_estimation_error(
                    ErrorCode.ESTIMATION_TOO_MANY_FAILURES,
                    f"設定 {design.label} の複製が全て失敗しました",
                    details={"design": design.label, "reps": design.reps},
                )
            )
        row = StudyRow(
            design=design,
            rmse={m: aggregate_rmse([o[m] for o in kept]) for m in METRICS},
            replications=len(kept),
            failed=design.reps - len(kept),
        )
        logger.info(
            "mc.design_finished design=%s qr_me=%.4f qr_naive=%.4f failed=%d",
            design.label, row.rmse["qr_me"], row.rmse["qr_naive"], row.failed,
        )
        result.rows.append(row)
    return result
