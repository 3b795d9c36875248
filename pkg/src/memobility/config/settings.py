"""Pydantic V2 ベースの統合設定モデル"""

import logging
from pathlib import Path
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from memobility.models import CopulaFamily, TauGrid

logger = logging.getLogger(__name__)


class QrFitConfig(BaseModel):
    """分位点回帰ソルバー設定"""

    model_config = {"extra": "forbid"}

    grid_size: int = Field(default=25, ge=2)
    grid_low: float = Field(default=0.02, gt=0.0, lt=1.0)
    grid_high: float = Field(default=0.98, gt=0.0, lt=1.0)
    tolerance: float = Field(default=1e-8, gt=0.0)
    max_iter: int = Field(default=500, ge=1)
    smoothing_stages: int = Field(default=3, ge=1)
    polish: bool = True

    @model_validator(mode="after")
    def _check_grid_bounds(self) -> "QrFitConfig":
        if self.grid_low >= self.grid_high:
            raise ValueError("grid_low は grid_high より小さい必要があります")
        return self

    def grid(self) -> TauGrid:
        """設定から TauGrid を作成"""
        return TauGrid.uniform(self.grid_size, self.grid_low, self.grid_high)


class EmConfig(BaseModel):
    """確率的EM設定 (既定値は S=100, burn-in 200, 2成分混合)"""

    model_config = {"extra": "forbid"}

    draws: int = Field(default=100, ge=1)
    burn_in: int = Field(default=200, ge=0)
    components: int = Field(default=2, ge=1)
    tolerance: Optional[float] = Field(default=None, gt=0.0)
    max_iter: int = Field(default=50, ge=1)
    proposal_scale: Optional[float] = Field(default=None, gt=0.0)
    averaging_window: int = Field(default=5, ge=1)
    adapt_interval: int = Field(default=25, ge=1)
    target_acceptance: Tuple[float, float] = (0.2, 0.4)
    mixture_max_iter: int = Field(default=200, ge=1)
    mixture_tolerance: float = Field(default=1e-8, gt=0.0)

    @field_validator("target_acceptance")
    @classmethod
    def _check_acceptance(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        low, high = value
        if not 0.0 < low < high < 1.0:
            raise ValueError("target_acceptance は 0 < low < high < 1 を満たす必要があります")
        return value

    def resolved_tolerance(self, grid_size: int, n_covariates: int) -> float:
        """ε を返す (未指定なら (L(K-1)+3m)/40)"""
        if self.tolerance is not None:
            return self.tolerance
        return (grid_size * (n_covariates - 1) + 3 * self.components) / 40.0


class SmleConfig(BaseModel):
    """シミュレーション最尤法の設定"""

    model_config = {"extra": "forbid"}

    draws: int = Field(default=250, ge=1)
    tolerance: float = Field(default=1e-6, gt=0.0)
    clayton_bounds: Tuple[float, float] = (1e-3, 50.0)
    gaussian_bounds: Tuple[float, float] = (-0.995, 0.995)
    frank_bounds: Tuple[float, float] = (-40.0, 40.0)

    @field_validator("clayton_bounds", "gaussian_bounds", "frank_bounds")
    @classmethod
    def _check_bounds(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        if value[0] >= value[1]:
            raise ValueError("パラメータ探索範囲の下限は上限より小さい必要があります")
        return value

    @field_validator("clayton_bounds")
    @classmethod
    def _check_clayton(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        if value[0] <= 0.0:
            raise ValueError("Clayton の探索範囲は正である必要があります")
        return value

    @field_validator("gaussian_bounds")
    @classmethod
    def _check_gaussian(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        if value[0] <= -1.0 or value[1] >= 1.0:
            raise ValueError("Gaussian の探索範囲は (-1,1) 内である必要があります")
        return value

    def bounds_for(self, family: CopulaFamily) -> Tuple[float, float]:
        return {
            CopulaFamily.CLAYTON: self.clayton_bounds,
            CopulaFamily.GAUSSIAN: self.gaussian_bounds,
            CopulaFamily.FRANK: self.frank_bounds,
        }[family]


class BootstrapConfig(BaseModel):
    """ブートストラップ設定"""

    model_config = {"extra": "forbid"}

    reps: int = Field(default=100, ge=2)
    alpha: float = Field(default=0.05, gt=0.0, lt=1.0)
    max_drop_fraction: float = Field(default=0.2, ge=0.0, lt=1.0)


class PanelConfig(BaseModel):
    """シミュレーションパネルと移動指標の設定"""

    model_config = {"extra": "forbid"}

    draws: int = Field(default=100, ge=0)
    cutoffs: List[float] = Field(default_factory=lambda: [0.25, 0.5, 0.75])
    upward_gap: float = Field(default=0.0, ge=0.0, lt=1.0)

    @field_validator("cutoffs")
    @classmethod
    def _check_cutoffs(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("cutoffs は1つ以上必要です")
        if any(c <= 0.0 or c >= 1.0 for c in value):
            raise ValueError("cutoffs は (0,1) 内である必要があります")
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("cutoffs は狭義単調増加である必要があります")
        return value


class LifecycleConfig(BaseModel):
    """ライフサイクル補正の基準年齢 (None なら補正しない)"""

    model_config = {"extra": "forbid"}

    reference_age_y: Optional[int] = Field(default=None, ge=0)
    reference_age_t: Optional[int] = Field(default=None, ge=0)


class MobilitySettings(BaseSettings):
    """memobility の統合設定"""

    model_config = SettingsConfigDict(
        env_prefix="MEMOBILITY_",
        env_file=".env",
        env_nested_delimiter="__",
        env_ignore_empty=True,
        extra="forbid",
    )

    qr: QrFitConfig = Field(default_factory=QrFitConfig)
    em: EmConfig = Field(default_factory=EmConfig)
    smle: SmleConfig = Field(default_factory=SmleConfig)
    bootstrap: BootstrapConfig = Field(default_factory=BootstrapConfig)
    panel: PanelConfig = Field(default_factory=PanelConfig)
    lifecycle: LifecycleConfig = Field(default_factory=LifecycleConfig)

    copula_family: Literal["clayton", "gaussian", "frank"] = "clayton"
    seed: Optional[int] = Field(default=None, ge=0)

    # 並列実行設定
    workers: int = Field(default=1, ge=1, le=64)
    block_size: int = Field(default=128, ge=1)

    # 出力・ログ設定
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "WARNING"
    output_format: Literal["json", "markdown", "csv"] = "markdown"
    strict: bool = False

    @property
    def family(self) -> CopulaFamily:
        return CopulaFamily(self.copula_family)


class ColumnMapping(BaseModel):
    """CSV 列と変数の対応"""

    model_config = {"extra": "forbid"}

    outcome: str
    treatment: str
    covariates: List[str] = Field(default_factory=list)
    age_outcome: Optional[str] = None
    age_treatment: Optional[str] = None
    delimiter: str = ","
    log_outcome: bool = True
    log_treatment: bool = True

    @field_validator("delimiter")
    @classmethod
    def _check_delimiter(cls, value: str) -> str:
        if len(value) != 1:
            raise ValueError("delimiter は1文字である必要があります")
        return value

    def required_columns(self) -> List[str]:
        columns = [self.outcome, self.treatment, *self.covariates]
        columns += [c for c in (self.age_outcome, self.age_treatment) if c]
        return columns


class RunConfig(BaseModel):
    """1回の実行で使う設定一式 (出力ファイルに埋め込まれる)"""

    model_config = {"extra": "forbid"}

    input_path: Path
    columns: ColumnMapping
    settings: MobilitySettings
    seed: int = Field(ge=0)
    output_dir: Path = Path("out")
