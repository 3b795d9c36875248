"""
共通データモデル

分位点過程・誤差分布・コピュラ・データセット・推定結果など、
全モジュールで共有する不変データ構造を定義
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from memobility.errors import (
    DataException,
    DomainException,
    ErrorCode,
    create_data_error,
    create_numeric_error,
)

__all__ = [
    "TauGrid",
    "QuantileProcess",
    "interpolate_beta",
    "GaussianMixture",
    "CopulaFamily",
    "CopulaSpec",
    "Dataset",
    "EmDiagnostics",
    "FitDiagnostics",
    "FittedModel",
]

DEFAULT_GRID_SIZE = 25
DEFAULT_GRID_LOW = 0.02
DEFAULT_GRID_HIGH = 0.98


def _frozen_array(values: Any, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=float, ndmin=ndim)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TauGrid:
    """分位点レベルの格子

    Attributes:
        knots: (0,1) 内の狭義単調増加な分位点レベル (長さ L)
    """
    knots: np.ndarray

    def __post_init__(self) -> None:
        knots = _frozen_array(self.knots, 1)
        if knots.ndim != 1 or knots.size < 2:
            raise ValueError("TauGrid には2点以上の1次元格子が必要です")
        if np.any(knots <= 0.0) or np.any(knots >= 1.0):
            raise ValueError("TauGrid の各点は (0,1) 内である必要があります")
        if np.any(np.diff(knots) <= 0.0):
            raise ValueError("TauGrid は狭義単調増加である必要があります")
        object.__setattr__(self, "knots", knots)

    @classmethod
    def uniform(cls, size: int, low: float = DEFAULT_GRID_LOW, high: float = DEFAULT_GRID_HIGH) -> "TauGrid":
        """等間隔格子を作成"""
        return cls(np.linspace(low, high, size))

    @classmethod
    def default(cls) -> "TauGrid":
        """既定格子 (0.02 から 0.98 まで 25 点)"""
        return cls.uniform(DEFAULT_GRID_SIZE)

    @property
    def size(self) -> int:
        return int(self.knots.size)

    @property
    def low(self) -> float:
        return float(self.knots[0])

    @property
    def high(self) -> float:
        return float(self.knots[-1])

    def clamp(self, tau: Any) -> np.ndarray:
        """格子範囲外の τ を端点に丸める"""
        return np.clip(np.asarray(tau, dtype=float), self.low, self.high)


@dataclass(frozen=True, eq=False)
class QuantileProcess:
    """分位点過程 τ ↦ β(τ)

    Attributes:
        grid: 分位点格子
        coefficients: L×K 係数行列 (l 行目が β(τ_l))
        rearranged: 推定データ上で分位点の交差が観測されたかどうか
    """
    grid: TauGrid
    coefficients: np.ndarray
    rearranged: bool = False

    def __post_init__(self) -> None:
        coefs = _frozen_array(self.coefficients, 2)
        if coefs.shape[0] != self.grid.size:
            raise ValueError(
                f"係数行列の行数 {coefs.shape[0]} が格子サイズ {self.grid.size} と一致しません"
            )
        object.__setattr__(self, "coefficients", coefs)

    @property
    def n_covariates(self) -> int:
        return int(self.coefficients.shape[1])

    def beta(self, tau: Any) -> np.ndarray:
        """τ における係数ベクトル (区分線形補間、範囲外は端点に丸め)"""
        return interpolate_beta(self, tau)

    def fitted_values(self, x: Any) -> np.ndarray:
        """各行 x に対する格子上の条件付き分位点 x'β(τ_l) (n×L)"""
        rows = np.atleast_2d(np.asarray(x, dtype=float))
        return rows @ self.coefficients.T

    def rearranged_values(self, x: Any) -> np.ndarray:
        """単調再配置後の条件付き分位点 (各行を τ 方向に昇順ソート)"""
        return np.sort(self.fitted_values(x), axis=1)

    def crossing_detected(self, x: Any) -> bool:
        """与えた行のいずれかで分位点の交差があるかどうか"""
        values = self.fitted_values(x)
        return bool(np.any(np.diff(values, axis=1) < 0.0))

    def as_vector(self) -> np.ndarray:
        return self.coefficients.ravel()


def interpolate_beta(qp: QuantileProcess, tau: Any) -> np.ndarray:
    """格子間を線形補間して β(τ) を返す

    Args:
        qp: 分位点過程
        tau: 分位点レベル (スカラーまたは配列)

    Returns:
        np.ndarray: スカラー τ なら長さ K、配列なら (len(τ), K)
    """
    tau_arr = qp.grid.clamp(tau)
    knots = qp.grid.knots
    columns = [np.interp(tau_arr, knots, qp.coefficients[:, j]) for j in range(qp.n_covariates)]
    return np.stack(columns, axis=-1)


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """平均ゼロに正規化された正規混合分布 (測定誤差の分布)

    Attributes:
        weights: 混合比 (和が1)
        means: 各成分の平均 (昇順)
        sds: 各成分の標準偏差 (正)
    """
    weights: np.ndarray
    means: np.ndarray
    sds: np.ndarray

    def __post_init__(self) -> None:
        weights = _frozen_array(self.weights, 1)
        means = _frozen_array(self.means, 1)
        sds = _frozen_array(self.sds, 1)
        if not (weights.size == means.size == sds.size) or weights.size == 0:
            raise ValueError("混合分布のパラメータ長が一致しません")
        if np.any(weights < 0.0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("混合比は非負で和が1である必要があります")
        if np.any(sds <= 0.0):
            raise ValueError("標準偏差は正である必要があります")
        if abs(float(weights @ means)) > 1e-10:
            raise ValueError("混合分布の平均は0である必要があります")
        if np.any(np.diff(means) < 0.0):
            raise ValueError("成分は平均の昇順に並んでいる必要があります")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "sds", sds)

    @classmethod
    def normalized(cls, weights: Any, means: Any, sds: Any) -> "GaussianMixture":
        """混合比の再正規化・平均ゼロへの中心化・平均順ソートを行って作成"""
        w = np.asarray(weights, dtype=float)
        w = w / w.sum()
        mu = np.asarray(means, dtype=float)
        mu = mu - float(w @ mu)
        order = np.argsort(mu, kind="stable")
        w, mu, sd = w[order], mu[order], np.asarray(sds, dtype=float)[order]
        # ソート後の丸め誤差を除く
        mu = mu - float(w @ mu)
        return cls(w, mu, sd)

    @classmethod
    def degenerate(cls, scale: float = 1e-8) -> "GaussianMixture":
        """ほぼ0に退化した単一成分 (測定誤差なしの極限)"""
        return cls(np.array([1.0]), np.array([0.0]), np.array([scale]))

    @property
    def n_components(self) -> int:
        return int(self.weights.size)

    @property
    def variance(self) -> float:
        return float(self.weights @ (self.sds ** 2 + self.means ** 2))

    def logpdf(self, u: Any) -> np.ndarray:
        u_arr = np.asarray(u, dtype=float)
        comps = norm.logpdf(u_arr[..., None], loc=self.means, scale=self.sds)
        return logsumexp(comps, axis=-1, b=self.weights)

    def pdf(self, u: Any) -> np.ndarray:
        return np.exp(self.logpdf(u))

    def cdf(self, u: Any) -> np.ndarray:
        u_arr = np.asarray(u, dtype=float)
        return norm.cdf(u_arr[..., None], loc=self.means, scale=self.sds) @ self.weights

    def sample(self, size: Any, rng: np.random.Generator) -> np.ndarray:
        """混合分布から乱数を生成"""
        labels = rng.choice(self.n_components, size=size, p=self.weights)
        return rng.normal(self.means[labels], self.sds[labels])

    def as_vector(self) -> np.ndarray:
        """(weights, means, sds) を連結した長さ 3m のベクトル"""
        return np.concatenate([self.weights, self.means, self.sds])

    def to_dict(self) -> Dict[str, List[float]]:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "sds": self.sds.tolist(),
        }


class CopulaFamily(Enum):
    """パラメトリックコピュラの族"""
    CLAYTON = "clayton"
    GAUSSIAN = "gaussian"
    FRANK = "frank"


@dataclass(frozen=True)
class CopulaSpec:
    """コピュラの族とパラメータ

    Attributes:
        family: コピュラ族
        parameter: Clayton は δ>0, Gaussian は ρ∈(-1,1), Frank は θ≠0
    """
    family: CopulaFamily
    parameter: float

    def __post_init__(self) -> None:
        family = CopulaFamily(self.family)
        value = float(self.parameter)
        admissible = {
            CopulaFamily.CLAYTON: value > 0.0,
            CopulaFamily.GAUSSIAN: -1.0 < value < 1.0,
            CopulaFamily.FRANK: value != 0.0,
        }[family]
        if not np.isfinite(value) or not admissible:
            raise DomainException(
                create_numeric_error(
                    ErrorCode.NUMERIC_DOMAIN,
                    f"{family.value} コピュラのパラメータ {value} は許容区間外です",
                    details={"family": family.value, "parameter": value},
                )
            )
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "parameter", value)

    @classmethod
    def independence(cls) -> "CopulaSpec":
        """独立コピュラ (ρ=0 の Gaussian)"""
        return cls(CopulaFamily.GAUSSIAN, 0.0)

    def to_dict(self) -> Dict[str, Any]:
        return {"family": self.family.value, "parameter": self.parameter}


@dataclass(frozen=True, eq=False)
class Dataset:
    """観測データ (Y, T, X)

    Attributes:
        y: 結果変数 (子の所得)
        t: 処置変数 (親の所得)
        x: 切片列を先頭に持つ n×K の共変量行列
        age_y: y 観測時の年齢 (任意)
        age_t: t 観測時の年齢 (任意)
        covariate_names: x の列名 (先頭は "intercept")
        log_y: y が自然対数変換済みかどうか
        log_t: t が自然対数変換済みかどうか
    """
    y: np.ndarray
    t: np.ndarray
    x: np.ndarray
    age_y: Optional[np.ndarray] = None
    age_t: Optional[np.ndarray] = None
    covariate_names: Sequence[str] = ()
    log_y: bool = False
    log_t: bool = False

    def __post_init__(self) -> None:
        y = _frozen_array(self.y, 1)
        t = _frozen_array(self.t, 1)
        x = _frozen_array(self.x, 2)
        n = y.size
        problems: List[str] = []
        if t.size != n or x.shape[0] != n:
            problems.append("y, t, x の行数が一致しません")
        if n < x.shape[1]:
            problems.append(f"観測数 {n} が共変量数 {x.shape[1]} より少ないです")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(t)) and np.all(np.isfinite(x))):
            problems.append("欠損値または非有限値が含まれています")
        if x.shape[1] == 0 or not np.all(x[:, 0] == 1.0):
            problems.append("x の先頭列は全て1の切片列である必要があります")
        for name in ("age_y", "age_t"):
            ages = getattr(self, name)
            if ages is not None:
                ages_arr = np.array(ages, dtype=int, ndmin=1)
                if ages_arr.size != n:
                    problems.append(f"{name} の長さが観測数と一致しません")
                ages_arr.setflags(write=False)
                object.__setattr__(self, name, ages_arr)
        if problems:
            raise DataException(
                create_data_error(ErrorCode.DATA_INVALID, "; ".join(problems), details={"n": n})
            )
        names = tuple(self.covariate_names) or ("intercept",) + tuple(
            f"x{j}" for j in range(1, x.shape[1])
        )
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return int(self.y.size)

    @property
    def k(self) -> int:
        return int(self.x.shape[1])

    def take(self, indices: Any) -> "Dataset":
        """行を抽出 (ブートストラップの再標本化に使用)"""
        idx = np.asarray(indices, dtype=int)
        return Dataset(
            y=self.y[idx],
            t=self.t[idx],
            x=self.x[idx],
            age_y=None if self.age_y is None else self.age_y[idx],
            age_t=None if self.age_t is None else self.age_t[idx],
            covariate_names=self.covariate_names,
            log_y=self.log_y,
            log_t=self.log_t,
        )

    def with_values(self, y: Any, t: Any) -> "Dataset":
        """y, t を置き換えたデータセット"""
        return Dataset(
            y=y,
            t=t,
            x=self.x,
            age_y=self.age_y,
            age_t=self.age_t,
            covariate_names=self.covariate_names,
            log_y=self.log_y,
            log_t=self.log_t,
        )


@dataclass
class EmDiagnostics:
    """確率的EMの診断情報

    Attributes:
        iterations: 外側反復回数
        final_delta: 最終反復でのパラメータ変化ノルム
        converged: 閾値未満で停止したかどうか
        tolerance: 使用した閾値 ε
        deltas: 各反復の変化ノルム
        acceptance_rates: 各反復のMH平均採択率
        pooled_rows: 分位点回帰に渡した擬似観測数 (n×S)
        collapsed_components: 分散崩壊で再初期化した成分数の累計
        averaged_iterates: 最終推定値の平均に用いた反復数
        averaging_iterations: 収束後に平均のため追加で回した反復数
    """
    iterations: int = 0
    final_delta: float = float("inf")
    converged: bool = False
    tolerance: float = 0.0
    deltas: List[float] = field(default_factory=list)
    acceptance_rates: List[float] = field(default_factory=list)
    pooled_rows: int = 0
    collapsed_components: int = 0
    averaged_iterates: int = 0
    averaging_iterations: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "iterations": self.iterations,
            "final_delta": self.final_delta,
            "converged": self.converged,
            "tolerance": self.tolerance,
            "deltas": list(self.deltas),
            "acceptance_rates": list(self.acceptance_rates),
            "pooled_rows": self.pooled_rows,
            "collapsed_components": self.collapsed_components,
            "averaged_iterates": self.averaged_iterates,
            "averaging_iterations": self.averaging_iterations,
        }


@dataclass
class FitDiagnostics:
    """推定全体の診断情報"""
    em_y: EmDiagnostics = field(default_factory=EmDiagnostics)
    em_t: EmDiagnostics = field(default_factory=EmDiagnostics)
    smle_loglik: float = float("nan")
    flagged_observations: List[int] = field(default_factory=list)
    seed: Optional[int] = None
    dropped_rows: int = 0

    @property
    def converged(self) -> bool:
        return self.em_y.converged and self.em_t.converged

    def to_dict(self) -> Dict[str, Any]:
        return {
            "em_y": self.em_y.to_dict(),
            "em_t": self.em_t.to_dict(),
            "smle_loglik": self.smle_loglik,
            "flagged_observations": list(self.flagged_observations),
            "seed": self.seed,
            "dropped_rows": self.dropped_rows,
        }


@dataclass(frozen=True, eq=False)
class FittedModel:
    """推定済みモデル: 2つの分位点過程・2つの誤差分布・コピュラ"""
    qp_y: QuantileProcess
    qp_t: QuantileProcess
    err_y: GaussianMixture
    err_t: GaussianMixture
    copula: CopulaSpec
    diagnostics: FitDiagnostics = field(default_factory=FitDiagnostics)
