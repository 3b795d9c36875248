"""
推定パイプライン

ライフサイクル補正 (設定時) → 結果変数・処置変数それぞれの確率的EM →
シミュレーション最尤法 の順に実行し FittedModel を組み立てる。
CLI・ブートストラップ・モンテカルロ実験で共有する。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional, Tuple, Union

from memobility.config.settings import MobilitySettings
from memobility.core.concurrency import BlockExecutor
from memobility.core.deconvolution import stochastic_em_fit
from memobility.core.lifecycle import LifecycleProfile, apply_lifecycle
from memobility.core.quantile_regression import fit_process
from memobility.core.random import RandomStreams
from memobility.core.smle import naive_copula_fit, smle_fit
from memobility.errors import (
    ConvergenceException,
    ErrorCode,
    create_estimation_error,
)
from memobility.models import (
    Dataset,
    EmDiagnostics,
    FitDiagnostics,
    FittedModel,
    GaussianMixture,
)

logger = logging.getLogger(__name__)

Functionals = Callable[[FittedModel, Dataset, RandomStreams], Mapping[str, float]]
Statistic = Callable[[Dataset, RandomStreams], Mapping[str, float]]


@dataclass(frozen=True, eq=False)
class PipelineResult:
    """パイプラインの実行結果

    Attributes:
        model: 推定済みモデル
        dataset: 推定に使った (補正後の) データセット
        profiles: 変数名 → ライフサイクルプロファイル
    """
    model: FittedModel
    dataset: Dataset
    profiles: Dict[str, LifecycleProfile] = field(default_factory=dict)


def _as_streams(seed: Union[int, RandomStreams]) -> RandomStreams:
    return seed if isinstance(seed, RandomStreams) else RandomStreams(int(seed))


class EstimationPipeline:
    """測定誤差を考慮した同時分布の推定

    Args:
        settings: 統合設定
        executor: MH 抽出とパネル生成に使うブロック並列実行器
    """

    def __init__(self, settings: Optional[MobilitySettings] = None, executor: Optional[BlockExecutor] = None) -> None:
        self.settings = settings or MobilitySettings()
        self.executor = executor or BlockExecutor(self.settings.workers, self.settings.block_size)

    def prepare(self, dataset: Dataset) -> Tuple[Dataset, Dict[str, LifecycleProfile]]:
        """ライフサイクル補正を適用 (基準年齢が未設定なら何もしない)"""
        return apply_lifecycle(dataset, self.settings.lifecycle)

    def run(
        self,
        dataset: Dataset,
        seed: Union[int, RandomStreams],
        strict: Optional[bool] = None,
    ) -> PipelineResult:
        """推定を実行

        Args:
            dataset: 観測データ
            seed: シード、またはブートストラップ複製などの下位ストリーム群
            strict: True なら非収束で例外 (省略時は設定値)

        Returns:
            PipelineResult: モデル・補正後データ・プロファイル

        Raises:
            ConvergenceException: strict かつ EM が収束しなかった場合
        """
        streams = _as_streams(seed)
        settings = self.settings
        prepared, profiles = self.prepare(dataset)
        grid = settings.qr.grid()
        logger.info(
            "pipeline.start n=%d k=%d family=%s seed=%d",
            prepared.n, prepared.k, settings.copula_family, streams.seed,
        )

        em_y = stochastic_em_fit(
            prepared.y, prepared.x, settings.em, streams.child("em"),
            grid=grid, qr_config=settings.qr, executor=self.executor, variable="y",
        )
        em_t = stochastic_em_fit(
            prepared.t, prepared.x, settings.em, streams.child("em"),
            grid=grid, qr_config=settings.qr, executor=self.executor, variable="t",
        )
        smle = smle_fit(
            prepared, em_y.process, em_t.process, em_y.mixture, em_t.mixture,
            settings.family, settings.smle, streams.stream("smle"),
        )

        diagnostics = FitDiagnostics(
            em_y=em_y.diagnostics,
            em_t=em_t.diagnostics,
            smle_loglik=smle.loglik,
            flagged_observations=list(smle.flagged),
            seed=streams.seed,
        )
        model = FittedModel(
            qp_y=em_y.process,
            qp_t=em_t.process,
            err_y=em_y.mixture,
            err_t=em_t.mixture,
            copula=smle.spec,
            diagnostics=diagnostics,
        )
        is_strict = settings.strict if strict is None else strict
        if is_strict and not diagnostics.converged:
            raise ConvergenceException(
                create_estimation_error(
                    ErrorCode.ESTIMATION_EM_NOT_CONVERGED,
                    "確率的EMが反復上限までに収束しませんでした",
                    details={
                        "em_y": em_y.diagnostics.final_delta,
                        "em_t": em_t.diagnostics.final_delta,
                        "best": {"copula": smle.spec.to_dict()},
                    },
                )
            )
        logger.info(
            "pipeline.finished family=%s parameter=%.6g converged=%s",
            smle.spec.family.value, smle.spec.parameter, diagnostics.converged,
        )
        return PipelineResult(model=model, dataset=prepared, profiles=profiles)

    def fit(self, dataset: Dataset, seed: Union[int, RandomStreams]) -> FittedModel:
        """推定済みモデルのみを返す"""
        return self.run(dataset, seed).model

    def fit_naive(self, dataset: Dataset) -> FittedModel:
        """測定誤差を無視した比較用モデル

        観測値への分位点回帰と、その順位へのコピュラ擬似最尤推定。誤差分布は点質量。
        """
        settings = self.settings
        prepared, _ = self.prepare(dataset)
        grid = settings.qr.grid()
        qp_y = fit_process(prepared.y, prepared.x, grid, config=settings.qr)
        qp_t = fit_process(prepared.t, prepared.x, grid, config=settings.qr)
        copula = naive_copula_fit(prepared, qp_y, qp_t, settings.family, settings.smle)
        diagnostics = FitDiagnostics(
            em_y=EmDiagnostics(converged=True),
            em_t=EmDiagnostics(converged=True),
            smle_loglik=copula.loglik,
        )
        return FittedModel(
            qp_y=qp_y,
            qp_t=qp_t,
            err_y=GaussianMixture.degenerate(),
            err_t=GaussianMixture.degenerate(),
            copula=copula.spec,
            diagnostics=diagnostics,
        )

    def statistic(self, functionals: Functionals) -> Statistic:
        """再標本ごとに全推定をやり直して functionals を評価する統計量

        複製では非収束を例外として扱い、呼び出し側で棄却できるようにする。
        """

        def evaluate(dataset: Dataset, streams: RandomStreams) -> Mapping[str, float]:
            result = self.run(dataset, streams, strict=True)
            return functionals(result.model, result.dataset, streams.child("functionals"))

        return evaluate
