"""
確率的EMによる測定誤差の逆畳み込み

観測値 = 潜在変数 + 加法的誤差 の下で、潜在変数の分位点過程と誤差の正規混合分布を
交互に推定する:

1. 誤差の事後分布 f(u|観測, x) ∝ f*(観測 - u | x) f_U(u) から MH 法で S 個ずつ抽出
2. 擬似観測 (観測 - u, x) を重み 1/S でプールして分位点回帰、抽出値で混合分布を EM 更新
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Callable, List, Optional, Tuple

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from memobility.config.settings import EmConfig, QrFitConfig
from memobility.core.concurrency import BlockExecutor
from memobility.core.quantile_regression import ConditionalQuantileTable, fit_process
from memobility.core.random import RandomStreams
from memobility.models import EmDiagnostics, GaussianMixture, QuantileProcess, TauGrid

logger = logging.getLogger(__name__)

LogTarget = Callable[[np.ndarray], np.ndarray]

ADAPT_SHRINK = 0.7
ADAPT_GROW = 1.3
COLLAPSE_RATIO = 1e-6


def error_posterior_logpdf(
    u: Any, y_obs: Any, x: Any, qp: QuantileProcess, mix: GaussianMixture
) -> Any:
    """誤差 u の事後対数密度 (定数項を除く)

    log f*(y_obs - u | x) + log f_U(u)。f* は両端を線形に延長した分位点表の密度で、
    y_obs - u が延長後の台 [Q(0|x), Q(1|x)] の外なら -inf。

    Args:
        u: 誤差の候補値
        y_obs: 観測値
        x: 共変量行 (1行または u と同じ行数)
        qp: 潜在変数の分位点過程
        mix: 誤差の混合分布

    Returns:
        スカラー入力ならfloat、それ以外は配列
    """
    scalar = np.ndim(u) == 0 and np.ndim(y_obs) == 0 and np.ndim(x) <= 1
    table = ConditionalQuantileTable(qp, x, linear_tails=True)
    u_arr = np.atleast_1d(np.asarray(u, dtype=float))
    latent = np.atleast_1d(np.asarray(y_obs, dtype=float)) - u_arr
    out = table.log_density(latent) + mix.logpdf(u_arr)
    return float(out[0]) if scalar else out


@dataclass(frozen=True, eq=False)
class MhDraws:
    """MH 法の抽出結果

    Attributes:
        draws: n×S の抽出値 (burn-in 後の最後の S 状態)
        acceptance: 鎖ごとの採択率 (burn-in を含む全提案に対する割合)
        stuck_chains: 一度も採択されなかった鎖の数
    """
    draws: np.ndarray
    acceptance: np.ndarray
    stuck_chains: int


def _initial_state(
    y_obs: np.ndarray, x: np.ndarray, qp: Optional[QuantileProcess], target: LogTarget
) -> Tuple[np.ndarray, np.ndarray]:
    u = np.zeros_like(y_obs)
    log_p = target(u)
    infeasible = ~np.isfinite(log_p)
    if np.any(infeasible) and qp is not None:
        median = ConditionalQuantileTable(qp, x[infeasible], linear_tails=True).quantile(0.5)
        u[infeasible] = y_obs[infeasible] - median
        log_p = target(u)
    return u, log_p


def mh_sample_errors(
    y_obs: Any,
    x: Any,
    qp: Optional[QuantileProcess],
    mix: GaussianMixture,
    config: EmConfig,
    rng: np.random.Generator,
    log_target: Optional[LogTarget] = None,
) -> MhDraws:
    """ランダムウォーク MH 法で各観測の誤差を S 個ずつ抽出

    観測ごとに独立な鎖を並べてベクトル化する。提案幅は burn-in 中に
    adapt_interval ステップごとに鎖単位で調整し、burn-in 後は固定する。

    Args:
        y_obs: 観測値 (スカラーまたは長さ n)
        x: 共変量 (1行または n 行)
        qp: 潜在変数の分位点過程
        mix: 現在の誤差分布
        config: EM 設定 (draws, burn_in, proposal_scale, adapt_interval, target_acceptance)
        rng: 乱数ストリーム
        log_target: 事後対数密度の差し替え (解析的な検証用)

    Returns:
        MhDraws: 抽出結果
    """
    y_arr = np.atleast_1d(np.asarray(y_obs, dtype=float))
    x_arr = np.atleast_2d(np.asarray(x, dtype=float))
    n = y_arr.size
    if log_target is None:
        table = ConditionalQuantileTable(qp, x_arr, linear_tails=True)

        def target(u: np.ndarray) -> np.ndarray:
            return table.log_density(y_arr - u) + mix.logpdf(u)
    else:
        target = log_target

    u, log_p = _initial_state(y_arr, x_arr, qp, target)
    base_scale = config.proposal_scale or float(np.sqrt(mix.variance))
    scale = np.full(n, base_scale)
    low, high = config.target_acceptance

    draws = np.empty((n, config.draws))
    window = np.zeros(n)
    accepted = np.zeros(n)
    total_steps = config.burn_in + config.draws
    for step in range(total_steps):
        proposal = u + scale * rng.standard_normal(n)
        log_prop = target(proposal)
        with np.errstate(invalid="ignore"):
            log_ratio = log_prop - log_p
        accept = np.log(rng.uniform(size=n)) < np.nan_to_num(log_ratio, nan=-np.inf)
        u = np.where(accept, proposal, u)
        log_p = np.where(accept, log_prop, log_p)
        accepted += accept
        if step < config.burn_in:
            window += accept
            if (step + 1) % config.adapt_interval == 0:
                rate = window / config.adapt_interval
                scale = scale * np.where(rate < low, ADAPT_SHRINK, np.where(rate > high, ADAPT_GROW, 1.0))
                window[:] = 0.0
        else:
            draws[:, step - config.burn_in] = u

    acceptance = accepted / total_steps
    stuck = int(np.sum(accepted == 0))
    if stuck:
        logger.warning("mh.all_rejected chains=%d of=%d", stuck, n)
    logger.debug("mh.sampled chains=%d mean_acceptance=%.3f", n, float(acceptance.mean()))
    return MhDraws(draws=draws, acceptance=acceptance, stuck_chains=stuck)


def _mixture_em(
    values: np.ndarray, init: GaussianMixture, config: EmConfig
) -> Tuple[GaussianMixture, List[float], int]:
    """1次元正規混合の EM (平均ゼロ化の前の対数尤度列と崩壊回数も返す)"""
    data = np.asarray(values, dtype=float).ravel()
    size = data.size
    pooled_sd = max(float(np.std(data)), 1e-12)
    weights = init.weights.copy()
    means = init.means.copy()
    sds = init.sds.copy()
    trace: List[float] = []
    collapsed = 0
    for _ in range(config.mixture_max_iter):
        log_comp = norm.logpdf(data[:, None], loc=means, scale=sds) + np.log(np.maximum(weights, 1e-300))
        log_mix = logsumexp(log_comp, axis=1)
        loglik = float(log_mix.sum())
        resp = np.exp(log_comp - log_mix[:, None])
        counts = np.maximum(resp.sum(axis=0), 1e-300)
        weights = counts / size
        means = resp.T @ data / counts
        sds = np.sqrt(np.einsum("ij,ij->j", resp, (data[:, None] - means) ** 2) / counts)

        bad = (sds < COLLAPSE_RATIO * pooled_sd) | (counts < 1.0)
        if np.any(bad):
            collapsed += int(bad.sum())
            logger.warning("mixture.component_collapsed components=%d reset_sd=%.4g", int(bad.sum()), pooled_sd)
            sds = np.where(bad, pooled_sd, sds)
            weights = np.where(bad, np.maximum(weights, 1.0 / size), weights)
            weights = weights / weights.sum()

        if trace and abs(loglik - trace[-1]) <= config.mixture_tolerance * (1.0 + abs(loglik)):
            trace.append(loglik)
            break
        trace.append(loglik)

    return GaussianMixture.normalized(weights, means, sds), trace, collapsed


def mixture_em_update(values: Any, m: int, init: GaussianMixture, config: Optional[EmConfig] = None) -> GaussianMixture:
    """抽出した誤差から混合分布を EM 更新する

    Args:
        values: n×S 個の誤差抽出値
        m: 成分数 (init と一致している必要がある)
        init: 初期値となる混合分布
        config: 内部 EM の反復設定

    Returns:
        GaussianMixture: 平均ゼロ化・平均順ソート済みの混合分布
    """
    if init.n_components != m:
        raise ValueError(f"初期混合分布の成分数 {init.n_components} が m={m} と一致しません")
    if np.size(values) < m:
        raise ValueError("抽出値の数が成分数より少ないです")
    mixture, _, _ = _mixture_em(np.asarray(values, dtype=float), init, config or EmConfig(components=m))
    return mixture


def initial_mixture(m: int, residual_sd: float) -> GaussianMixture:
    """等重み・等間隔平均・σ_j = 残差標準偏差/√m の初期混合分布

    平均は -m から m の等間隔点を残差標準偏差の ±1/2 の幅に縮めたもの。
    """
    scale = max(float(residual_sd), 1e-8)
    means = np.linspace(-m, m, m) * scale / (2.0 * m) if m > 1 else np.zeros(1)
    sd = scale / np.sqrt(m)
    return GaussianMixture.normalized(np.full(m, 1.0 / m), means, np.full(m, sd))


@dataclass(frozen=True, eq=False)
class EmResult:
    """確率的EMの結果"""
    process: QuantileProcess
    mixture: GaussianMixture
    diagnostics: EmDiagnostics


def _average_iterates(history: List[Tuple[QuantileProcess, GaussianMixture]]) -> Tuple[QuantileProcess, GaussianMixture]:
    processes = [qp for qp, _ in history]
    mixtures = [mix for _, mix in history]
    coefficients = np.mean([qp.coefficients for qp in processes], axis=0)
    rearranged = any(qp.rearranged for qp in processes)
    mixture = GaussianMixture.normalized(
        np.mean([m.weights for m in mixtures], axis=0),
        np.mean([m.means for m in mixtures], axis=0),
        np.mean([m.sds for m in mixtures], axis=0),
    )
    return QuantileProcess(processes[0].grid, coefficients, rearranged=rearranged), mixture


def _stack(qp: QuantileProcess, mix: GaussianMixture) -> np.ndarray:
    return np.concatenate([qp.as_vector(), mix.as_vector()])


def stochastic_em_fit(
    values: Any,
    x: Any,
    config: EmConfig,
    streams: RandomStreams,
    grid: Optional[TauGrid] = None,
    qr_config: Optional[QrFitConfig] = None,
    executor: Optional[BlockExecutor] = None,
    variable: str = "y",
) -> EmResult:
    """1変数の分位点過程と測定誤差分布を確率的EMで推定

    初期値は観測データへの素朴な分位点回帰と、τ=0.5 の残差標準偏差から作る
    混合分布。パラメータ変化ノルムが ε 未満になるか反復上限に達するまで
    抽出と再推定を繰り返す。収束した場合はさらに W 回反復し、その W 個の反復値の
    平均を推定値とする。反復上限に達した場合は最後の W 回の反復値を平均する。

    Args:
        values: 観測値 (長さ n)
        x: n×K の共変量行列 (先頭は切片)
        config: EM 設定
        streams: 乱数ストリーム群 (反復・ブロックごとに派生させる)
        grid: 分位点格子 (省略時は qr_config の格子)
        qr_config: 分位点回帰の設定
        executor: ブロック並列実行器
        variable: ログ・乱数ラベルに使う変数名

    Returns:
        EmResult: 平均化した分位点過程・混合分布と診断情報
    """
    qr_cfg = qr_config or QrFitConfig()
    tau_grid = grid or qr_cfg.grid()
    runner = executor or BlockExecutor()
    y_arr = np.asarray(values, dtype=float).ravel()
    x_arr = np.atleast_2d(np.asarray(x, dtype=float))
    n, k = x_arr.shape
    draws_per_row = config.draws
    tolerance = config.resolved_tolerance(tau_grid.size, k)

    qp = fit_process(y_arr, x_arr, tau_grid, config=qr_cfg)
    residuals = y_arr - x_arr @ qp.beta(0.5)
    mix = initial_mixture(config.components, float(np.std(residuals)))
    logger.info(
        "em.start variable=%s n=%d k=%d draws=%d tolerance=%.4g",
        variable, n, k, draws_per_row, tolerance,
    )

    diagnostics = EmDiagnostics(tolerance=tolerance)
    pooled_x = np.repeat(x_arr, draws_per_row, axis=0)
    pooled_weights = np.full(n * draws_per_row, 1.0 / draws_per_row)

    def em_step(label: str, qp: QuantileProcess, mix: GaussianMixture) -> Tuple[QuantileProcess, GaussianMixture]:
        def sample_block(indices: np.ndarray, rng: np.random.Generator) -> MhDraws:
            return mh_sample_errors(y_arr[indices], x_arr[indices], qp, mix, config, rng)

        blocks = runner.map_blocks(sample_block, n, streams.child(f"{variable}/{label}"), "mh")
        errors = np.vstack([b.draws for b in blocks])
        pooled_y = (y_arr[:, None] - errors).ravel()
        new_qp = fit_process(pooled_y, pooled_x, tau_grid, weights=pooled_weights, config=qr_cfg, start=qp)
        new_mix, _, collapsed = _mixture_em(errors, mix, config)
        diagnostics.acceptance_rates.append(float(np.concatenate([b.acceptance for b in blocks]).mean()))
        diagnostics.pooled_rows = pooled_y.size
        diagnostics.collapsed_components += collapsed
        return new_qp, new_mix

    history: List[Tuple[QuantileProcess, GaussianMixture]] = []
    previous = _stack(qp, mix)
    for iteration in range(1, config.max_iter + 1):
        qp, mix = em_step(f"iter{iteration}", qp, mix)
        current = _stack(qp, mix)
        delta = float(np.linalg.norm(current - previous)) if current.size == previous.size else float("inf")
        previous = current
        history.append((qp, mix))

        diagnostics.iterations = iteration
        diagnostics.final_delta = delta
        diagnostics.deltas.append(delta)
        logger.debug(
            "em.iteration variable=%s iter=%d delta=%.6g acceptance=%.3f",
            variable, iteration, delta, diagnostics.acceptance_rates[-1],
        )
        if delta < tolerance:
            diagnostics.converged = True
            break

    if diagnostics.converged:
        # 平均には収束判定を通過した後の反復値だけを使う
        window: List[Tuple[QuantileProcess, GaussianMixture]] = []
        for extra in range(1, config.averaging_window + 1):
            qp, mix = em_step(f"avg{extra}", qp, mix)
            window.append((qp, mix))
        diagnostics.averaging_iterations = len(window)
    else:
        logger.warning(
            "em.not_converged variable=%s iterations=%d final_delta=%.6g tolerance=%.4g",
            variable, diagnostics.iterations, diagnostics.final_delta, tolerance,
        )
        window = history[-config.averaging_window:]

    final_qp, final_mix = _average_iterates(window)
    diagnostics.averaged_iterates = len(window)
    logger.info(
        "em.finished variable=%s iterations=%d converged=%s averaged=%d",
        variable, diagnostics.iterations, diagnostics.converged, diagnostics.averaged_iterates,
    )
    return EmResult(process=final_qp, mixture=final_mix, diagnostics=diagnostics)
