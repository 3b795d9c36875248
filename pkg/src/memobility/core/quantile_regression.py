"""
分位点回帰

畳み込み平滑化したチェック関数を準ニュートン法で最小化し、平滑化幅を
段階的に縮小した後に基底解で仕上げる。推定した分位点過程から条件付き
分布関数・密度・分位点を区分線形補間の厳密な逆写像として評価する。
"""

from __future__ import annotations

import itertools
import logging
from typing import Any, Optional, Tuple

import numpy as np
from scipy.optimize import linprog, minimize
from scipy.stats import norm

from memobility.config.settings import QrFitConfig
from memobility.errors import (
    ConvergenceException,
    ErrorCode,
    SingularDesignException,
    create_numeric_error,
)
from memobility.models import QuantileProcess, TauGrid

logger = logging.getLogger(__name__)

DENSITY_CAP = 1e12


def check_loss(residuals: Any, tau: float, weights: Optional[np.ndarray] = None) -> float:
    """チェック関数 ρ_τ(w) = (τ - 1{w<0}) w の (重み付き) 和"""
    r = np.asarray(residuals, dtype=float)
    loss = (tau - (r < 0.0)) * r
    if weights is None:
        return float(loss.sum())
    return float(np.asarray(weights, dtype=float) @ loss)


def _smoothed_objective(
    beta: np.ndarray, x: np.ndarray, y: np.ndarray, w: np.ndarray, tau: float, h: float
) -> Tuple[float, np.ndarray]:
    """ガウスカーネルで平滑化したチェック関数とその勾配"""
    r = y - x @ beta
    z = r / h
    lower = norm.cdf(-z)
    loss = float(w @ (r * (tau - lower) + h * norm.pdf(z)))
    grad = -(x.T @ (w * (tau - lower)))
    return loss, grad


def _bandwidth(n: int, k: int, tau: float, scale: float) -> float:
    h0 = min((k + np.log(n)) / n, 0.5) ** 0.4
    return max(0.01, h0 * np.sqrt(tau - tau ** 2)) * scale


def _robust_scale(r: np.ndarray) -> float:
    mad = float(np.median(np.abs(r - np.median(r)))) * 1.4826
    if mad > 0.0:
        return mad
    sd = float(np.std(r))
    return sd if sd > 0.0 else 1.0


class _Standardizer:
    """切片以外の列を中心化・尺度化し、係数を元の座標に戻す"""

    def __init__(self, x: np.ndarray) -> None:
        k = x.shape[1]
        self.has_intercept = bool(np.all(x[:, 0] == 1.0))
        self.center = np.zeros(k)
        self.scale = np.ones(k)
        start = 1 if self.has_intercept else 0
        if x.shape[1] > start:
            sd = x[:, start:].std(axis=0)
            sd[sd == 0.0] = 1.0
            self.scale[start:] = sd
            if self.has_intercept:
                self.center[start:] = x[:, start:].mean(axis=0)

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (x - self.center) / self.scale

    def to_original(self, beta: np.ndarray) -> np.ndarray:
        out = beta / self.scale
        if self.has_intercept:
            out[0] = beta[0] - float(out[1:] @ self.center[1:])
        return out

    def to_standard(self, beta: np.ndarray) -> np.ndarray:
        out = beta * self.scale
        if self.has_intercept:
            out[0] = beta[0] + float(beta[1:] @ self.center[1:])
        return out


def _as_design(x: Any) -> np.ndarray:
    x_arr = np.asarray(x, dtype=float)
    if x_arr.ndim == 1:
        x_arr = x_arr[:, None]
    return x_arr


def _validate_design(x: np.ndarray, y: np.ndarray) -> None:
    n, k = x.shape
    if y.shape[0] != n:
        raise ValueError("y と x の行数が一致しません")
    if n < k or np.linalg.matrix_rank(x) < k:
        raise SingularDesignException(
            create_numeric_error(
                ErrorCode.NUMERIC_SINGULAR_DESIGN,
                "計画行列がフルランクではありません",
                details={"n": n, "k": k},
            )
        )


def _vertex_polish(
    x: np.ndarray, y: np.ndarray, w: np.ndarray, tau: float, beta: np.ndarray
) -> Tuple[np.ndarray, float]:
    """残差の小さい観測で張る基底解を試し、チェック損失が最小のものを返す"""
    k = x.shape[1]
    best = beta
    best_loss = check_loss(y - x @ beta, tau, w)
    candidates = np.argsort(np.abs(y - x @ beta))[: min(k + 2, y.size)]
    for subset in itertools.combinations(candidates, k):
        rows = np.asarray(subset)
        xs = x[rows]
        if abs(np.linalg.det(xs)) < 1e-12:
            continue
        trial = np.linalg.solve(xs, y[rows])
        loss = check_loss(y - x @ trial, tau, w)
        if loss < best_loss - 1e-15 * max(1.0, abs(best_loss)):
            best, best_loss = trial, loss
    return best, best_loss


def qr_fit(
    y: Any,
    x: Any,
    tau: float,
    weights: Optional[Any] = None,
    config: Optional[QrFitConfig] = None,
    start: Optional[np.ndarray] = None,
) -> np.ndarray:
    """線形分位点回帰の係数を推定

    Args:
        y: 長さ n の応答
        x: n×K の計画行列
        tau: 分位点レベル
        weights: 観測ごとの非負の重み (省略時は等重み)
        config: ソルバー設定
        start: 初期値 (直前の分位点の解など)

    Returns:
        np.ndarray: Σ w_i ρ_τ(y_i - x_i'b) を最小化する b

    Raises:
        SingularDesignException: 計画行列がランク落ちしている場合
        ConvergenceException: 最初の平滑化段階が反復上限に達した場合
    """
    cfg = config or QrFitConfig()
    y_arr = np.asarray(y, dtype=float).ravel()
    x_arr = _as_design(x)
    _validate_design(x_arr, y_arr)
    n, k = x_arr.shape
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    w = w / w.sum()

    std = _Standardizer(x_arr)
    xs = std.transform(x_arr)
    if start is not None:
        beta = std.to_standard(np.asarray(start, dtype=float).copy())
    else:
        sw = np.sqrt(w)
        beta, *_ = np.linalg.lstsq(xs * sw[:, None], y_arr * sw, rcond=None)
        if std.has_intercept:
            beta[0] += float(np.quantile(y_arr - xs @ beta, tau))

    scale = _robust_scale(y_arr - xs @ beta)
    h = _bandwidth(n, k, tau, scale)
    best = beta.copy()
    best_loss = check_loss(y_arr - xs @ beta, tau, w)
    for stage in range(cfg.smoothing_stages):
        result = minimize(
            _smoothed_objective,
            beta,
            args=(xs, y_arr, w, tau, h),
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": cfg.max_iter, "ftol": cfg.tolerance, "gtol": cfg.tolerance},
        )
        if stage == 0 and result.status == 1:
            raise ConvergenceException(
                create_numeric_error(
                    ErrorCode.NUMERIC_NOT_CONVERGED,
                    f"分位点回帰が反復上限 {cfg.max_iter} に達しました (tau={tau:.4f})",
                    details={"best": std.to_original(best.copy()).tolist(), "tau": tau},
                    recoverable=True,
                )
            )
        beta = result.x
        loss = check_loss(y_arr - xs @ beta, tau, w)
        if loss < best_loss:
            best, best_loss = beta.copy(), loss
        logger.debug(
            "qr.stage tau=%.4f stage=%d h=%.3g loss=%.8g status=%d",
            tau, stage, h, loss, result.status,
        )
        h /= 4.0

    if cfg.polish:
        best, best_loss = _vertex_polish(xs, y_arr, w, tau, best)
    return std.to_original(np.asarray(best, dtype=float).copy())


def qr_fit_lp(y: Any, x: Any, tau: float, weights: Optional[Any] = None) -> np.ndarray:
    """線形計画法による分位点回帰 (小標本の検証用)"""
    y_arr = np.asarray(y, dtype=float).ravel()
    x_arr = _as_design(x)
    _validate_design(x_arr, y_arr)
    n, k = x_arr.shape
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    cost = np.concatenate([np.zeros(k), tau * w, (1.0 - tau) * w])
    a_eq = np.hstack([x_arr, np.eye(n), -np.eye(n)])
    bounds = [(None, None)] * k + [(0.0, None)] * (2 * n)
    result = linprog(cost, A_eq=a_eq, b_eq=y_arr, bounds=bounds, method="highs")
    if not result.success:
        raise ConvergenceException(
            create_numeric_error(
                ErrorCode.NUMERIC_NOT_CONVERGED,
                f"線形計画法が失敗しました: {result.message}",
            )
        )
    return result.x[:k]


def fit_process(
    y: Any,
    x: Any,
    grid: TauGrid,
    weights: Optional[Any] = None,
    config: Optional[QrFitConfig] = None,
    start: Optional[QuantileProcess] = None,
) -> QuantileProcess:
    """格子の全点で分位点回帰を行い QuantileProcess を返す

    各分位点は直前の分位点の解 (または start の同じ行) から開始する。
    推定データ上で分位点の交差が見つかった場合は rearranged=True を記録する。
    """
    x_arr = _as_design(x)
    rows = []
    previous: Optional[np.ndarray] = None
    for l, tau in enumerate(grid.knots):
        init = start.coefficients[l] if start is not None else previous
        beta = qr_fit(y, x_arr, float(tau), weights=weights, config=config, start=init)
        rows.append(beta)
        previous = beta
    qp = QuantileProcess(grid, np.vstack(rows))
    crossed = qp.crossing_detected(x_arr)
    if crossed:
        logger.info("qr.rearrangement crossing=true knots=%d", grid.size)
    return QuantileProcess(grid, qp.coefficients, rearranged=crossed)


class ConditionalQuantileTable:
    """行ごとの単調再配置済み条件付き分位点表

    Q(τ|x) は格子上の値を線形補間し、格子外は端点で一定とする。このとき F は
    両端の格子点に τ_1 と 1-τ_L の質量を置くので、密度の積分は τ_L-τ_1 になる。

    linear_tails=True では両端の区間の傾きのまま τ=0 と τ=1 まで延長する。
    台は [Q(0|x), Q(1|x)] に広がり、密度の積分は 1 になる。
    """

    def __init__(self, qp: QuantileProcess, x: Any, linear_tails: bool = False) -> None:
        knots = qp.grid.knots
        values = qp.rearranged_values(x)
        if linear_tails:
            low_slope = (values[:, 1] - values[:, 0]) / (knots[1] - knots[0])
            high_slope = (values[:, -1] - values[:, -2]) / (knots[-1] - knots[-2])
            q0 = values[:, 0] - knots[0] * low_slope
            q1 = values[:, -1] + (1.0 - knots[-1]) * high_slope
            knots = np.concatenate([[0.0], knots, [1.0]])
            values = np.column_stack([q0, values, q1])
        self.knots = knots
        self.values = values

    @property
    def rows(self) -> int:
        return int(self.values.shape[0])

    def _segments(self, y: np.ndarray):
        m = max(self.rows, y.shape[0])
        q = np.broadcast_to(self.values, (m, self.knots.size))
        count = (q <= y[:, None]).sum(axis=1)
        seg = np.clip(count - 1, 0, self.knots.size - 2)
        q_lo = np.take_along_axis(q, seg[:, None], axis=1)[:, 0]
        q_hi = np.take_along_axis(q, seg[:, None] + 1, axis=1)[:, 0]
        return count, seg, q_lo, q_hi

    def cdf(self, y: Any) -> np.ndarray:
        y_arr = np.atleast_1d(np.asarray(y, dtype=float))
        count, seg, q_lo, q_hi = self._segments(y_arr)
        y_b = np.broadcast_to(y_arr, count.shape)
        k_lo, k_hi = self.knots[seg], self.knots[seg + 1]
        interior = (count > 0) & (count < self.knots.size)
        gap = np.where(interior, q_hi - q_lo, 1.0)
        tau = k_lo + (y_b - q_lo) / gap * (k_hi - k_lo)
        out = np.where(count == 0, 0.0, np.where(count >= self.knots.size, 1.0, tau))
        return np.clip(out, 0.0, 1.0)

    def density(self, y: Any) -> np.ndarray:
        y_arr = np.atleast_1d(np.asarray(y, dtype=float))
        count, seg, q_lo, q_hi = self._segments(y_arr)
        k_lo, k_hi = self.knots[seg], self.knots[seg + 1]
        interior = (count > 0) & (count < self.knots.size)
        gap = q_hi - q_lo
        with np.errstate(divide="ignore", invalid="ignore"):
            dens = np.where(gap > 0.0, (k_hi - k_lo) / gap, DENSITY_CAP)
        capped = interior & (dens >= DENSITY_CAP)
        if np.any(capped):
            logger.debug("qr.density_capped count=%d", int(capped.sum()))
        return np.where(interior, np.minimum(dens, DENSITY_CAP), 0.0)

    def log_density(self, y: Any) -> np.ndarray:
        dens = self.density(y)
        with np.errstate(divide="ignore"):
            return np.log(dens)

    def quantile(self, tau: Any) -> np.ndarray:
        tau_arr = np.clip(np.atleast_1d(np.asarray(tau, dtype=float)), self.knots[0], self.knots[-1])
        m = max(self.rows, tau_arr.shape[0])
        q = np.broadcast_to(self.values, (m, self.knots.size))
        tau_b = np.broadcast_to(tau_arr, (m,))
        seg = np.clip(np.searchsorted(self.knots, tau_b, side="right") - 1, 0, self.knots.size - 2)
        k_lo, k_hi = self.knots[seg], self.knots[seg + 1]
        q_lo = np.take_along_axis(q, seg[:, None], axis=1)[:, 0]
        q_hi = np.take_along_axis(q, seg[:, None] + 1, axis=1)[:, 0]
        return q_lo + (tau_b - k_lo) / (k_hi - k_lo) * (q_hi - q_lo)


def _evaluate(method: str, qp: QuantileProcess, value: Any, x: Any) -> Any:
    scalar = np.ndim(value) == 0 and np.ndim(x) <= 1
    table = ConditionalQuantileTable(qp, x)
    out = getattr(table, method)(value)
    return float(out[0]) if scalar else out


def conditional_cdf(qp: QuantileProcess, y: Any, x: Any) -> Any:
    """F(y|x): {τ : Q(τ|x) ≤ y} のルベーグ測度 (区分線形補間の厳密な逆写像)"""
    return _evaluate("cdf", qp, y, x)


def conditional_density(qp: QuantileProcess, y: Any, x: Any) -> Any:
    """f(y|x) = 1 / (dQ(τ|x)/dτ) at τ = F(y|x)。台の外では 0"""
    return _evaluate("density", qp, y, x)


def conditional_quantile(qp: QuantileProcess, tau: Any, x: Any) -> Any:
    """Q(τ|x) = x'β(τ) (単調再配置と端点への丸めを適用)"""
    return _evaluate("quantile", qp, tau, x)
