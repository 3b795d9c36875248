"""
データモデルのユニットテスト
"""

import unittest

import numpy as np
from scipy.integrate import trapezoid

from memobility.errors import DataException, DomainException, ErrorCode
from memobility.models import (
    CopulaFamily,
    CopulaSpec,
    Dataset,
    EmDiagnostics,
    FitDiagnostics,
    GaussianMixture,
    QuantileProcess,
    TauGrid,
    interpolate_beta,
)


class TestTauGrid(unittest.TestCase):
    """TauGridのテスト"""

    def test_default_grid(self):
        """既定格子は 0.02 から 0.98 の 25 点"""
        grid = TauGrid.default()
        self.assertEqual(grid.size, 25)
        self.assertAlmostEqual(grid.low, 0.02)
        self.assertAlmostEqual(grid.high, 0.98)

    def test_rejects_invalid_knots(self):
        """範囲外・非単調・1点のみの格子を拒否"""
        for knots in ([0.0, 0.5], [0.2, 1.0], [0.5, 0.3], [0.5], [0.3, 0.3]):
            with self.assertRaises(ValueError, msg=str(knots)):
                TauGrid(knots)

    def test_clamp(self):
        grid = TauGrid.uniform(5, 0.1, 0.9)
        np.testing.assert_allclose(grid.clamp([0.0, 0.5, 1.0]), [0.1, 0.5, 0.9])

    def test_knots_are_read_only(self):
        grid = TauGrid.uniform(3)
        with self.assertRaises(ValueError):
            grid.knots[0] = 0.5


class TestQuantileProcess(unittest.TestCase):
    """QuantileProcessのテスト"""

    def setUp(self):
        self.grid = TauGrid([0.25, 0.5, 0.75])
        self.qp = QuantileProcess(self.grid, [[0.0, 1.0], [1.0, 1.0], [3.0, 0.0]])

    def test_shape_mismatch(self):
        """格子サイズと行数が違えば ValueError"""
        with self.assertRaises(ValueError):
            QuantileProcess(self.grid, [[0.0, 1.0], [1.0, 1.0]])

    def test_beta_interpolates_linearly(self):
        """格子間は線形補間"""
        np.testing.assert_allclose(self.qp.beta(0.375), [0.5, 1.0])

    def test_beta_clamps_outside_grid(self):
        """格子外は端点の係数"""
        np.testing.assert_allclose(self.qp.beta(0.01), [0.0, 1.0])
        np.testing.assert_allclose(self.qp.beta(0.99), [3.0, 0.0])

    def test_beta_vectorized(self):
        self.assertEqual(self.qp.beta([0.25, 0.5, 0.6]).shape, (3, 2))

    def test_interpolate_beta_exact_at_knots(self):
        """格子点では係数行列の行をそのまま返す"""
        np.testing.assert_allclose(interpolate_beta(self.qp, self.grid.knots), self.qp.coefficients)

    def test_crossing_and_rearrangement(self):
        """x=5 では τ=0.5 と τ=0.75 の分位点が交差し、並べ替えで単調になる"""
        x = [[1.0, 5.0]]
        self.assertTrue(self.qp.crossing_detected(x))
        values = self.qp.rearranged_values(x)
        self.assertTrue(np.all(np.diff(values, axis=1) >= 0.0))
        self.assertFalse(self.qp.crossing_detected([[1.0, 0.0]]))


class TestGaussianMixture(unittest.TestCase):
    """GaussianMixtureのテスト"""

    def test_normalized_centers_and_sorts(self):
        """再正規化・中心化・平均順の並べ替え"""
        mix = GaussianMixture.normalized([2.0, 2.0], [3.0, -1.0], [0.5, 1.0])
        np.testing.assert_allclose(mix.weights, [0.5, 0.5])
        np.testing.assert_allclose(mix.means, [-2.0, 2.0])
        np.testing.assert_allclose(mix.sds, [1.0, 0.5])
        self.assertAlmostEqual(float(mix.weights @ mix.means), 0.0, places=12)

    def test_rejects_nonzero_mean(self):
        with self.assertRaises(ValueError):
            GaussianMixture([0.5, 0.5], [0.0, 1.0], [1.0, 1.0])

    def test_rejects_nonpositive_sd(self):
        with self.assertRaises(ValueError):
            GaussianMixture([1.0], [0.0], [0.0])

    def test_rejects_bad_weights(self):
        with self.assertRaises(ValueError):
            GaussianMixture([0.6, 0.6], [-1.0, 1.0], [1.0, 1.0])

    def test_variance(self):
        """分散 = Σ w (σ² + μ²)"""
        mix = GaussianMixture([0.5, 0.5], [-1.0, 1.0], [1.0, 2.0])
        self.assertAlmostEqual(mix.variance, 0.5 * 2.0 + 0.5 * 5.0)

    def test_pdf_integrates_to_one(self):
        mix = GaussianMixture([0.3, 0.7], [-0.7, 0.3], [0.4, 0.8])
        grid = np.linspace(-10.0, 10.0, 20001)
        self.assertAlmostEqual(float(trapezoid(mix.pdf(grid), grid)), 1.0, places=6)

    def test_cdf_limits(self):
        mix = GaussianMixture([0.3, 0.7], [-0.7, 0.3], [0.4, 0.8])
        self.assertAlmostEqual(float(mix.cdf(-50.0)), 0.0)
        self.assertAlmostEqual(float(mix.cdf(50.0)), 1.0)

    def test_sample_moments(self):
        """標本平均はゼロに近い"""
        mix = GaussianMixture([0.5, 0.5], [-1.0, 1.0], [0.5, 0.5])
        draws = mix.sample(20000, np.random.default_rng(0))
        self.assertEqual(draws.shape, (20000,))
        self.assertLess(abs(float(draws.mean())), 0.05)

    def test_as_vector_and_dict(self):
        mix = GaussianMixture.normalized([1.0, 1.0], [-1.0, 1.0], [1.0, 1.0])
        self.assertEqual(mix.as_vector().size, 6)
        self.assertEqual(set(mix.to_dict()), {"weights", "means", "sds"})


class TestCopulaSpec(unittest.TestCase):
    """CopulaSpecのテスト"""

    def test_admissible_parameters(self):
        CopulaSpec(CopulaFamily.CLAYTON, 0.5)
        CopulaSpec(CopulaFamily.GAUSSIAN, -0.9)
        CopulaSpec(CopulaFamily.FRANK, -3.0)

    def test_inadmissible_parameters_raise_domain_error(self):
        """許容区間外のパラメータは NUMERIC_DOMAIN"""
        cases = [
            (CopulaFamily.CLAYTON, 0.0),
            (CopulaFamily.CLAYTON, -1.0),
            (CopulaFamily.GAUSSIAN, 1.0),
            (CopulaFamily.FRANK, 0.0),
            (CopulaFamily.FRANK, float("nan")),
        ]
        for family, value in cases:
            with self.assertRaises(DomainException, msg=f"{family} {value}") as ctx:
                CopulaSpec(family, value)
            self.assertEqual(ctx.exception.error.code, ErrorCode.NUMERIC_DOMAIN.value)

    def test_family_from_string(self):
        spec = CopulaSpec("frank", 2)
        self.assertIs(spec.family, CopulaFamily.FRANK)
        self.assertEqual(spec.to_dict(), {"family": "frank", "parameter": 2.0})

    def test_independence(self):
        spec = CopulaSpec.independence()
        self.assertIs(spec.family, CopulaFamily.GAUSSIAN)
        self.assertEqual(spec.parameter, 0.0)


class TestDataset(unittest.TestCase):
    """Datasetのテスト"""

    def _x(self, n):
        return np.column_stack([np.ones(n), np.arange(n, dtype=float)])

    def test_valid_dataset(self):
        data = Dataset(y=[1.0, 2.0, 3.0], t=[1.0, 1.5, 2.0], x=self._x(3))
        self.assertEqual(data.n, 3)
        self.assertEqual(data.k, 2)
        self.assertEqual(data.covariate_names, ("intercept", "x1"))

    def test_rejects_missing_values(self):
        with self.assertRaises(DataException):
            Dataset(y=[1.0, np.nan, 3.0], t=[1.0, 1.5, 2.0], x=self._x(3))

    def test_rejects_missing_intercept(self):
        with self.assertRaises(DataException):
            Dataset(y=[1.0, 2.0], t=[1.0, 2.0], x=[[2.0], [1.0]])

    def test_rejects_fewer_rows_than_covariates(self):
        with self.assertRaises(DataException):
            Dataset(y=[1.0], t=[1.0], x=[[1.0, 0.5]])

    def test_rejects_length_mismatch(self):
        with self.assertRaises(DataException):
            Dataset(y=[1.0, 2.0, 3.0], t=[1.0, 2.0], x=self._x(3))

    def test_take_keeps_ages(self):
        data = Dataset(y=[1.0, 2.0, 3.0], t=[1.0, 1.5, 2.0], x=self._x(3), age_y=[30, 31, 32])
        taken = data.take([2, 2, 0])
        np.testing.assert_allclose(taken.y, [3.0, 3.0, 1.0])
        np.testing.assert_array_equal(taken.age_y, [32, 32, 30])

    def test_with_values(self):
        data = Dataset(y=[1.0, 2.0], t=[1.0, 2.0], x=self._x(2), log_y=True)
        replaced = data.with_values([5.0, 6.0], [7.0, 8.0])
        np.testing.assert_allclose(replaced.y, [5.0, 6.0])
        self.assertTrue(replaced.log_y)


class TestDiagnostics(unittest.TestCase):
    """診断情報のテスト"""

    def test_converged_requires_both(self):
        diag = FitDiagnostics(em_y=EmDiagnostics(converged=True), em_t=EmDiagnostics(converged=False))
        self.assertFalse(diag.converged)
        diag.em_t.converged = True
        self.assertTrue(diag.converged)

    def test_to_dict_keys(self):
        data = FitDiagnostics().to_dict()
        self.assertEqual(
            set(data), {"em_y", "em_t", "smle_loglik", "flagged_observations", "seed", "dropped_rows"}
        )
        self.assertIn("deltas", data["em_y"])


if __name__ == "__main__":
    unittest.main()
