"""
テスト共通のデータ・モデル生成
"""

from typing import Any, Dict

import numpy as np

from memobility.config.settings import MobilitySettings
from memobility.core.montecarlo import McDesign, generate, outcome_coefficients, treatment_coefficients
from memobility.core.random import seeded_rng
from memobility.models import (
    CopulaFamily,
    CopulaSpec,
    Dataset,
    EmDiagnostics,
    FitDiagnostics,
    FittedModel,
    GaussianMixture,
    QuantileProcess,
    TauGrid,
)

CLAYTON_2 = CopulaSpec(CopulaFamily.CLAYTON, 2.0)


def fast_settings(**overrides: Any) -> MobilitySettings:
    """テスト用に反復数と抽出数を絞った設定"""
    data: Dict[str, Any] = {
        "qr": {"grid_size": 5, "grid_low": 0.1, "grid_high": 0.9, "max_iter": 200},
        "em": {"draws": 3, "burn_in": 10, "max_iter": 2, "averaging_window": 2, "mixture_max_iter": 20},
        "smle": {"draws": 10, "tolerance": 1e-3},
        "panel": {"draws": 5},
    }
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(data.get(key), dict):
            data[key] = {**data[key], **value}
        else:
            data[key] = value
    return MobilitySettings(**data)


def simulated_dataset(n: int = 120, seed: int = 7, sigma: float = 0.1, copula: CopulaSpec = CLAYTON_2) -> Dataset:
    """既知の係数曲線とコピュラから生成した観測データ"""
    design = McDesign(n=n, copula=copula, sigma=sigma, reps=1)
    return generate(design, seeded_rng(seed, "test-data")).dataset


def true_model(copula: CopulaSpec = CLAYTON_2, sigma: float = 0.1, grid_size: int = 25) -> FittedModel:
    """データ生成過程そのものを FittedModel として組み立てる"""
    grid = TauGrid.uniform(grid_size)
    converged = EmDiagnostics(iterations=1, final_delta=0.0, converged=True)
    return FittedModel(
        qp_y=QuantileProcess(grid, outcome_coefficients(grid.knots)),
        qp_t=QuantileProcess(grid, treatment_coefficients(grid.knots)),
        err_y=GaussianMixture.normalized([1.0], [0.0], [sigma]),
        err_t=GaussianMixture.normalized([1.0], [0.0], [sigma]),
        copula=copula,
        diagnostics=FitDiagnostics(em_y=converged, em_t=converged, smle_loglik=-1.0, seed=0),
    )


def linear_dataset(n: int = 200, seed: int = 3) -> Dataset:
    """切片と1共変量の正の値を持つデータ (対数変換なし)"""
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=n)
    y = 1.0 + 2.0 * x + rng.normal(0.0, 0.2, size=n)
    t = 0.5 + x + rng.normal(0.0, 0.2, size=n)
    return Dataset(y=y, t=t, x=np.column_stack([np.ones(n), x]), covariate_names=("intercept", "x"))
