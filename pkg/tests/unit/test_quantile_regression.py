"""
分位点回帰のユニットテスト
"""

import unittest

import numpy as np
from scipy.integrate import trapezoid

from memobility.config.settings import QrFitConfig
from memobility.core.quantile_regression import (
    DENSITY_CAP,
    ConditionalQuantileTable,
    check_loss,
    conditional_cdf,
    conditional_density,
    conditional_quantile,
    fit_process,
    qr_fit,
    qr_fit_lp,
)
from memobility.errors import SingularDesignException
from memobility.models import QuantileProcess, TauGrid


def _design(n: int, seed: int):
    rng = np.random.default_rng(seed)
    x = np.column_stack([np.ones(n), rng.uniform(size=n)])
    y = 1.0 + 2.0 * x[:, 1] + rng.standard_normal(n) * (0.5 + x[:, 1])
    return y, x


class TestCheckLoss(unittest.TestCase):
    """check_lossのテスト"""

    def test_asymmetric_weights(self):
        """正の残差は τ、負の残差は 1-τ で重み付け"""
        self.assertAlmostEqual(check_loss([2.0, -2.0], 0.25), 0.25 * 2.0 + 0.75 * 2.0)
        self.assertAlmostEqual(check_loss([1.0], 0.9, weights=np.array([2.0])), 1.8)


class TestQrFit(unittest.TestCase):
    """qr_fitのテスト"""

    def test_matches_linear_programming_loss(self):
        """平滑化ソルバーの損失が線形計画法の最適値とほぼ一致すること"""
        y, x = _design(150, 1)
        for tau in (0.1, 0.5, 0.9):
            smooth = qr_fit(y, x, tau)
            exact = qr_fit_lp(y, x, tau)
            loss_smooth = check_loss(y - x @ smooth, tau)
            loss_exact = check_loss(y - x @ exact, tau)
            self.assertLessEqual(loss_smooth, loss_exact * (1.0 + 1e-3) + 1e-9, msg=f"tau={tau}")

    def test_median_of_constant_design(self):
        """切片のみなら中央値を返す"""
        y = np.array([1.0, 2.0, 3.0, 4.0, 100.0])
        beta = qr_fit(y, np.ones((5, 1)), 0.5)
        self.assertAlmostEqual(float(beta[0]), 3.0, places=4)

    def test_weights_shift_solution(self):
        """重みの大きい観測に解が引き寄せられること"""
        y = np.array([0.0, 10.0])
        x = np.ones((2, 1))
        beta = qr_fit(y, x, 0.5, weights=np.array([0.9, 0.1]))
        self.assertAlmostEqual(float(beta[0]), 0.0, places=4)

    def test_singular_design(self):
        """ランク落ちの計画行列は SingularDesignException"""
        x = np.column_stack([np.ones(10), np.arange(10.0), 2.0 * np.arange(10.0)])
        with self.assertRaises(SingularDesignException):
            qr_fit(np.arange(10.0), x, 0.5)
        with self.assertRaises(SingularDesignException):
            qr_fit_lp(np.arange(10.0), x, 0.5)

    def test_fewer_rows_than_columns(self):
        with self.assertRaises(SingularDesignException):
            qr_fit([1.0], np.array([[1.0, 2.0]]), 0.5)


class TestFitProcess(unittest.TestCase):
    """fit_processのテスト"""

    def test_process_shape_and_monotone_at_mean(self):
        y, x = _design(300, 2)
        grid = TauGrid.uniform(7, 0.1, 0.9)
        qp = fit_process(y, x, grid, config=QrFitConfig(grid_size=7))
        self.assertEqual(qp.coefficients.shape, (7, 2))
        fitted = qp.fitted_values(x.mean(axis=0))
        self.assertTrue(np.all(np.diff(fitted, axis=1) > 0.0))

    def test_warm_start_reaches_same_loss(self):
        y, x = _design(200, 3)
        grid = TauGrid.uniform(5, 0.1, 0.9)
        cold = fit_process(y, x, grid)
        warm = fit_process(y, x, grid, start=cold)
        for l, tau in enumerate(grid.knots):
            self.assertAlmostEqual(
                check_loss(y - x @ warm.coefficients[l], tau),
                check_loss(y - x @ cold.coefficients[l], tau),
                delta=1e-3 * check_loss(y - x @ cold.coefficients[l], tau),
            )


class TestConditionalQuantileTable(unittest.TestCase):
    """条件付き分布の評価のテスト"""

    def setUp(self):
        self.qp = QuantileProcess(TauGrid([0.25, 0.5, 0.75]), [[0.0], [1.0], [3.0]])
        self.table = ConditionalQuantileTable(self.qp, [[1.0]])

    def test_cdf_inverts_piecewise_linear_quantile(self):
        np.testing.assert_allclose(self.table.cdf([0.5, 2.0]), [0.375, 0.625])

    def test_cdf_outside_support(self):
        np.testing.assert_allclose(self.table.cdf([-1.0, 3.5]), [0.0, 1.0])

    def test_density(self):
        """密度は区間の傾きの逆数、台の外では 0"""
        np.testing.assert_allclose(self.table.density([0.5, 2.0, -1.0, 4.0]), [0.25, 0.125, 0.0, 0.0])
        self.assertEqual(float(self.table.log_density([-1.0])[0]), -np.inf)

    def test_flat_segment_is_capped(self):
        """ほぼ平坦な区間の密度は上限で打ち切る"""
        qp = QuantileProcess(TauGrid([0.25, 0.5, 0.75]), [[0.0], [1e-20], [1.0]])
        dens = ConditionalQuantileTable(qp, [[1.0]]).density([5e-21])
        self.assertEqual(float(dens[0]), DENSITY_CAP)

    def test_quantile_clamps(self):
        np.testing.assert_allclose(self.table.quantile([0.375, 0.05, 0.99]), [0.5, 0.0, 3.0])

    def test_scalar_helpers(self):
        """スカラー入力には float を返す"""
        value = conditional_cdf(self.qp, 0.5, [1.0])
        self.assertIsInstance(value, float)
        self.assertAlmostEqual(value, 0.375)
        self.assertAlmostEqual(conditional_density(self.qp, 2.0, [1.0]), 0.125)
        self.assertAlmostEqual(conditional_quantile(self.qp, 0.5, [1.0]), 1.0)

    def test_rowwise_evaluation(self):
        """行ごとに異なる共変量で評価できること"""
        qp = QuantileProcess(TauGrid([0.25, 0.75]), [[0.0, 1.0], [1.0, 1.0]])
        x = np.array([[1.0, 0.0], [1.0, 2.0]])
        np.testing.assert_allclose(conditional_cdf(qp, np.array([0.5, 2.5]), x), [0.5, 0.5])

    def test_linear_tails(self):
        """linear_tails では端の区間の傾きのまま τ=0 と τ=1 まで延長する"""
        table = ConditionalQuantileTable(self.qp, [[1.0]], linear_tails=True)
        np.testing.assert_allclose(table.cdf([-2.0, -0.5, 0.5, 4.0, 6.0]), [0.0, 0.125, 0.375, 0.875, 1.0])
        np.testing.assert_allclose(table.density([-0.5, 4.0, -1.5, 5.5]), [0.25, 0.125, 0.0, 0.0])
        np.testing.assert_allclose(table.quantile([0.0, 0.1, 0.9, 1.0]), [-1.0, -0.6, 4.2, 5.0])


class TestConditionalDistributionProperties(unittest.TestCase):
    """推定した分位点過程から作る条件付き分布の性質"""

    @classmethod
    def setUpClass(cls):
        y, x = _design(500, 5)
        cls.qp = fit_process(y, x, TauGrid.default())
        cls.x0 = x.mean(axis=0)

    def _mass(self, table: ConditionalQuantileTable) -> float:
        grid = np.linspace(table.values[0, 0], table.values[0, -1], 20001)
        return float(trapezoid(table.density(grid), grid))

    def test_density_mass_with_clamped_tails(self):
        """端点で丸める表の密度の積分は τ_L - τ_1 (= 0.96)。残りは両端の格子点の質量"""
        table = ConditionalQuantileTable(self.qp, self.x0)
        knots = self.qp.grid.knots
        self.assertAlmostEqual(self._mass(table), knots[-1] - knots[0], delta=1e-3)
        self.assertAlmostEqual(float(table.cdf([table.values[0, 0]])[0]), knots[0], places=12)

    def test_density_mass_with_linear_tails(self):
        table = ConditionalQuantileTable(self.qp, self.x0, linear_tails=True)
        self.assertAlmostEqual(self._mass(table), 1.0, delta=1e-3)

    def test_density_matches_finite_difference(self):
        """格子の各区間の内点で、中心差分で微分した F(y|x) が f(y|x) に 1e-4 以内で一致"""
        table = ConditionalQuantileTable(self.qp, self.x0)
        knots = self.qp.grid.knots
        taus = (knots[:-1, None] + np.array([0.15, 0.35, 0.5, 0.65, 0.85]) * np.diff(knots)[:, None]).ravel()
        points = table.quantile(taus)
        h = 1e-6
        numeric = (table.cdf(points + h) - table.cdf(points - h)) / (2.0 * h)
        np.testing.assert_allclose(numeric, table.density(points), atol=1e-4)

    def test_quantile_matches_bisection(self):
        """Q(τ|x) は F(y|x) の二分法による逆写像と 1e-8 以内で一致"""
        table = ConditionalQuantileTable(self.qp, self.x0)
        for tau in (0.1, 0.37, 0.5, 0.83):
            low, high = table.values[0, 0], table.values[0, -1]
            for _ in range(200):
                mid = 0.5 * (low + high)
                if table.cdf([mid])[0] < tau:
                    low = mid
                else:
                    high = mid
            self.assertAlmostEqual(float(table.quantile([tau])[0]), high, delta=1e-8)


class TestFirstOrderCondition(unittest.TestCase):
    """|Σ x_i ψ_τ(y_i - x_i'b)| の劣勾配条件"""

    def _score(self, y, x, beta, tau):
        psi = tau - (y - x @ beta < 0.0)
        return float(np.abs(x.T @ psi).max())

    def test_score_is_bounded(self):
        y, x = _design(300, 6)
        k = x.shape[1]
        bound = k * float(np.linalg.norm(x, axis=1).max())
        for tau in (0.25, 0.5, 0.75):
            self.assertLessEqual(self._score(y, x, qr_fit_lp(y, x, tau), tau), bound, msg=f"lp tau={tau}")
            self.assertLessEqual(self._score(y, x, qr_fit(y, x, tau), tau), 2.0 * bound, msg=f"tau={tau}")


if __name__ == "__main__":
    unittest.main()
