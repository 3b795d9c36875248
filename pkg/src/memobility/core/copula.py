"""
パラメトリックコピュラ

Clayton・Gaussian・Frank の各族について CDF, PDF, 条件付きコピュラ
C₂(u,v) = ∂C/∂v とその u に関する逆関数、条件付き逆変換法による乱数生成を提供する。
第1引数 u は結果変数 (子) の順位、第2引数 v は処置変数 (親) の順位を表す。
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from typing import Any, Tuple

import numpy as np
from scipy import integrate
from scipy.optimize import brentq
from scipy.special import ndtri
from scipy.stats import norm

from memobility.models import CopulaFamily, CopulaSpec

logger = logging.getLogger(__name__)

TRIM = 1e-12
BISECTION_STEPS = 60


def _log_expm1(z: np.ndarray) -> np.ndarray:
    """log(exp(z) - 1) を z ≥ 0 で安定に計算 (z=0 では -inf)"""
    with np.errstate(divide="ignore"):
        return np.where(z > 30.0, z + np.log1p(-np.exp(-np.minimum(z, 700.0))), np.log(np.expm1(np.minimum(z, 30.0))))


class Copula(ABC):
    """コピュラの基底クラス

    境界条件 C(u,0)=C(0,v)=0, C(u,1)=u, C(1,v)=v と
    C₂(0,v)=0, C₂(1,v)=1 は基底クラスで厳密に適用する。
    """

    family: CopulaFamily

    def __init__(self, parameter: float) -> None:
        self.spec = CopulaSpec(self.family, parameter)
        self.parameter = self.spec.parameter

    def __repr__(self) -> str:
        return f"{type(self).__name__}(parameter={self.parameter})"

    @staticmethod
    def _trim(w: np.ndarray) -> np.ndarray:
        return np.clip(w, TRIM, 1.0 - TRIM)

    @abstractmethod
    def _cdf(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """内点 (0,1)² での CDF"""

    @abstractmethod
    def _log_pdf(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """内点での対数密度"""

    @abstractmethod
    def _hfun(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """内点での C₂(u,v) = ∂C/∂v"""

    @abstractmethod
    def kendall_tau(self) -> float:
        """パラメータに対応する Kendall の τ"""

    def cdf(self, u: Any, v: Any) -> Any:
        u_arr, v_arr = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
        _check_unit(u_arr, v_arr)
        interior = (u_arr > 0.0) & (u_arr < 1.0) & (v_arr > 0.0) & (v_arr < 1.0)
        out = np.where(u_arr >= 1.0, v_arr, np.where(v_arr >= 1.0, u_arr, 0.0))
        if np.any(interior):
            values = self._cdf(u_arr[interior], v_arr[interior])
            # Fréchet–Hoeffding 限界内に収める
            lower = np.maximum(u_arr[interior] + v_arr[interior] - 1.0, 0.0)
            upper = np.minimum(u_arr[interior], v_arr[interior])
            out = out.astype(float, copy=True)
            out[interior] = np.clip(values, lower, upper)
        return _unwrap(out)

    def pdf(self, u: Any, v: Any) -> Any:
        return _unwrap(np.exp(self.log_pdf(u, v)))

    def log_pdf(self, u: Any, v: Any) -> Any:
        u_arr, v_arr = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
        return _unwrap(self._log_pdf(self._trim(u_arr), self._trim(v_arr)))

    def hfun(self, u: Any, v: Any) -> Any:
        """条件付きコピュラ C₂(u,v) = P(U ≤ u | V = v)"""
        u_arr, v_arr = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
        _check_unit(u_arr, v_arr)
        v_in = self._trim(v_arr)
        interior = (u_arr > 0.0) & (u_arr < 1.0)
        out = np.where(u_arr >= 1.0, 1.0, 0.0)
        if np.any(interior):
            out = out.astype(float, copy=True)
            out[interior] = np.clip(self._hfun(u_arr[interior], v_in[interior]), 0.0, 1.0)
        return _unwrap(out)

    def inv_hfun(self, p: Any, v: Any) -> Any:
        """C₂(·,v) の逆関数 (既定は二分法)"""
        p_arr, v_arr = np.broadcast_arrays(np.asarray(p, dtype=float), np.asarray(v, dtype=float))
        return _unwrap(self._bisect_hfun(p_arr, self._trim(v_arr)))

    def _bisect_hfun(self, p: np.ndarray, v: np.ndarray) -> np.ndarray:
        lo = np.zeros(p.shape)
        hi = np.ones(p.shape)
        for _ in range(BISECTION_STEPS):
            mid = 0.5 * (lo + hi)
            below = self.hfun(mid, v) < p
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    def sample(self, n: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        """条件付き逆変換法で n 組の順位を生成

        Returns:
            Tuple[np.ndarray, np.ndarray]: (結果変数の順位 u, 処置変数の順位 v)
        """
        v = rng.uniform(size=n)
        p = rng.uniform(size=n)
        u = np.asarray(self.inv_hfun(p, v), dtype=float).reshape(n)
        return u, v


def _check_unit(u: np.ndarray, v: np.ndarray) -> None:
    if np.any((u < 0.0) | (u > 1.0) | (v < 0.0) | (v > 1.0)):
        raise ValueError("コピュラの引数は [0,1] 内である必要があります")


def _unwrap(values: np.ndarray) -> Any:
    arr = np.asarray(values, dtype=float)
    return float(arr) if arr.ndim == 0 else arr


class ClaytonCopula(Copula):
    """Clayton コピュラ C(u,v) = (u^-δ + v^-δ - 1)^(-1/δ)"""

    family = CopulaFamily.CLAYTON

    def _log_sum(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        # log(u^-δ + v^-δ - 1)
        a = -self.parameter * np.log(u)
        b = -self.parameter * np.log(v)
        s = np.logaddexp(a, b)
        return s + np.log1p(-np.exp(-s))

    def _cdf(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.exp(-self._log_sum(u, v) / self.parameter)

    def _log_pdf(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        d = self.parameter
        return (
            np.log1p(d)
            - (1.0 + d) * (np.log(u) + np.log(v))
            - (2.0 + 1.0 / d) * self._log_sum(u, v)
        )

    def _hfun(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        # (1 + v^δ (u^-δ - 1))^(-(1+δ)/δ)
        d = self.parameter
        log_inner = d * np.log(v) + _log_expm1(-d * np.log(u))
        return np.exp(-(1.0 + d) / d * np.logaddexp(0.0, log_inner))

    def inv_hfun(self, p: Any, v: Any) -> Any:
        """[(p^(-δ/(1+δ)) - 1) v^-δ + 1]^(-1/δ)"""
        p_arr, v_arr = np.broadcast_arrays(np.asarray(p, dtype=float), np.asarray(v, dtype=float))
        p_in = np.clip(p_arr, TRIM, 1.0 - TRIM)
        v_in = self._trim(v_arr)
        d = self.parameter
        log_a = _log_expm1(-d / (1.0 + d) * np.log(p_in))
        u = np.exp(-np.logaddexp(0.0, log_a - d * np.log(v_in)) / d)
        u = np.where(p_arr <= 0.0, 0.0, np.where(p_arr >= 1.0, 1.0, u))
        return _unwrap(u)

    def kendall_tau(self) -> float:
        return self.parameter / (self.parameter + 2.0)

    @staticmethod
    def parameter_from_tau(tau: float) -> float:
        return 2.0 * tau / (1.0 - tau)


class GaussianCopula(Copula):
    """Gaussian コピュラ (相関 ρ)"""

    family = CopulaFamily.GAUSSIAN

    @property
    def _scale(self) -> float:
        return float(np.sqrt(1.0 - self.parameter ** 2))

    def _cdf(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        rho = self.parameter
        if rho == 0.0:
            return u * v
        a = ndtri(u)
        b = ndtri(v)
        sigma = self._scale

        # C(u,v) = ∫_{-∞}^{Φ⁻¹(u)} Φ((Φ⁻¹(v) - ρz)/√(1-ρ²)) φ(z) dz を z = a - s で s∈[0,∞) に変換
        def integrand(s: float) -> np.ndarray:
            z = a - s
            return norm.cdf((b - rho * z) / sigma) * norm.pdf(z)

        value, _ = integrate.quad_vec(
            integrand, 0.0, np.inf, epsabs=1e-13, epsrel=1e-11, norm="max", limit=2000
        )
        return np.asarray(value, dtype=float)

    def _log_pdf(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        rho = self.parameter
        a = ndtri(u)
        b = ndtri(v)
        one_minus = 1.0 - rho ** 2
        return -0.5 * np.log(one_minus) - (rho ** 2 * (a ** 2 + b ** 2) - 2.0 * rho * a * b) / (2.0 * one_minus)

    def _hfun(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return norm.cdf((ndtri(u) - self.parameter * ndtri(v)) / self._scale)

    def inv_hfun(self, p: Any, v: Any) -> Any:
        """Φ(ρΦ⁻¹(v) + √(1-ρ²)Φ⁻¹(p))"""
        p_arr, v_arr = np.broadcast_arrays(np.asarray(p, dtype=float), np.asarray(v, dtype=float))
        v_in = self._trim(v_arr)
        return _unwrap(norm.cdf(self.parameter * ndtri(v_in) + self._scale * ndtri(p_arr)))

    def kendall_tau(self) -> float:
        return float(2.0 / np.pi * np.arcsin(self.parameter))

    @staticmethod
    def parameter_from_tau(tau: float) -> float:
        return float(np.sin(np.pi * tau / 2.0))


class ArchimedeanCopula(Copula):
    """生成素 ψ で定まるアルキメデス型コピュラ C(u,v) = ψ⁻¹(ψ(u) + ψ(v))"""

    @abstractmethod
    def generator(self, s: np.ndarray) -> np.ndarray:
        """ψ(s)"""

    @abstractmethod
    def generator_inverse(self, w: np.ndarray) -> np.ndarray:
        """ψ⁻¹(w)"""

    @abstractmethod
    def generator_d1(self, s: np.ndarray) -> np.ndarray:
        """ψ'(s)"""

    @abstractmethod
    def generator_d2(self, s: np.ndarray) -> np.ndarray:
        """ψ''(s)"""

    def _cdf(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return self.generator_inverse(self.generator(u) + self.generator(v))

    def _hfun(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        c = self._trim(self._cdf(u, v))
        return self.generator_d1(v) / self.generator_d1(c)

    def _log_pdf(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        c = self._trim(self._cdf(u, v))
        d1c = self.generator_d1(c)
        dens = -self.generator_d2(c) * self.generator_d1(u) * self.generator_d1(v) / d1c ** 3
        with np.errstate(divide="ignore"):
            return np.log(np.maximum(dens, 0.0))


class FrankCopula(ArchimedeanCopula):
    """Frank コピュラ: ψ(s) = -log((e^{-θs} - 1)/(e^{-θ} - 1))"""

    family = CopulaFamily.FRANK

    def generator(self, s: np.ndarray) -> np.ndarray:
        theta = self.parameter
        with np.errstate(divide="ignore"):
            return -np.log(np.expm1(-theta * s) / np.expm1(-theta))

    def generator_inverse(self, w: np.ndarray) -> np.ndarray:
        theta = self.parameter
        return -np.log1p(np.exp(-w) * np.expm1(-theta)) / theta

    def generator_d1(self, s: np.ndarray) -> np.ndarray:
        theta = self.parameter
        return theta * np.exp(-theta * s) / np.expm1(-theta * s)

    def generator_d2(self, s: np.ndarray) -> np.ndarray:
        theta = self.parameter
        return theta ** 2 * np.exp(-theta * s) / np.expm1(-theta * s) ** 2

    def kendall_tau(self) -> float:
        theta = self.parameter
        debye, _ = integrate.quad(lambda t: t / np.expm1(t) if t != 0.0 else 1.0, 0.0, theta)
        return float(1.0 - 4.0 / theta * (1.0 - debye / theta))

    @staticmethod
    def parameter_from_tau(tau: float) -> float:
        if abs(tau) < 1e-12:
            raise ValueError("Frank コピュラは τ=0 に対応するパラメータを持ちません")
        bound = 1.0
        while abs(FrankCopula(np.sign(tau) * bound).kendall_tau()) < abs(tau):
            bound *= 2.0
        return float(brentq(lambda theta: FrankCopula(theta).kendall_tau() - tau, np.sign(tau) * 1e-6, np.sign(tau) * bound))


_FAMILIES = {
    CopulaFamily.CLAYTON: ClaytonCopula,
    CopulaFamily.GAUSSIAN: GaussianCopula,
    CopulaFamily.FRANK: FrankCopula,
}


def make_copula(spec: CopulaSpec) -> Copula:
    """CopulaSpec から Copula インスタンスを作成"""
    return _FAMILIES[spec.family](spec.parameter)


def copula_cdf(spec: CopulaSpec, u: Any, v: Any) -> Any:
    """C(u,v)"""
    return make_copula(spec).cdf(u, v)


def copula_pdf(spec: CopulaSpec, u: Any, v: Any) -> Any:
    """c(u,v) = ∂²C/∂u∂v"""
    return make_copula(spec).pdf(u, v)


def conditional_copula(spec: CopulaSpec, u: Any, v: Any) -> Any:
    """C₂(u,v) = ∂C(u,v)/∂v"""
    return make_copula(spec).hfun(u, v)


def conditional_copula_inverse(spec: CopulaSpec, p: Any, v: Any) -> Any:
    """C₂(u,v) = p を満たす u"""
    return make_copula(spec).inv_hfun(p, v)


def copula_sample(spec: CopulaSpec, n: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """(結果変数の順位, 処置変数の順位) を n 組生成"""
    if n < 0:
        raise ValueError("n は非負である必要があります")
    return make_copula(spec).sample(n, rng)


def kendall_tau(spec: CopulaSpec) -> float:
    return make_copula(spec).kendall_tau()


def parameter_from_kendall_tau(family: CopulaFamily, tau: float) -> CopulaSpec:
    """Kendall τ から族のパラメータを逆算"""
    if not -1.0 < tau < 1.0:
        raise ValueError("τ は (-1, 1) の範囲である必要があります")
    return CopulaSpec(family, _FAMILIES[family].parameter_from_tau(tau))
