"""
モンテカルロ実験のユニットテスト
"""

import math
import unittest

import numpy as np

from memobility.core.montecarlo import (
    METRICS,
    McDesign,
    StudyResult,
    StudyRow,
    aggregate_rmse,
    conditioning_point,
    generate,
    outcome_coefficients,
    poverty_line,
    qr_poverty_rate,
    run_study,
    treatment_coefficients,
)
from memobility.core.random import seeded_rng
from memobility.models import CopulaFamily, CopulaSpec, TauGrid

from tests.helpers import CLAYTON_2, fast_settings


class TestDesign(unittest.TestCase):
    """McDesignのテスト"""

    def test_label(self):
        design = McDesign(n=100, copula=CLAYTON_2, sigma=0.1, reps=5)
        self.assertEqual(design.label, "clayton-2-n100-sigma0.1")

    def test_validation(self):
        for kwargs in ({"n": 5}, {"sigma": 0.0}, {"reps": 0}):
            with self.subTest(kwargs=kwargs):
                values = {"n": 100, "copula": CLAYTON_2, "sigma": 0.1, "reps": 1, **kwargs}
                with self.assertRaises(ValueError):
                    McDesign(**values)


class TestGenerate(unittest.TestCase):
    """データ生成のテスト"""

    def test_coefficient_curves(self):
        np.testing.assert_allclose(outcome_coefficients(0.5), [2.25, math.exp(0.5)])
        np.testing.assert_allclose(treatment_coefficients(0.25), [1.5, 0.1 * math.exp(0.25)])
        self.assertEqual(outcome_coefficients([0.1, 0.2]).shape, (2, 2))

    def test_reference_points(self):
        self.assertAlmostEqual(poverty_line(), 1.29 + math.exp(0.1) * 0.5)
        self.assertAlmostEqual(conditioning_point(), 1.0 + math.sqrt(0.5) + 0.05 * math.exp(0.5))

    def test_latent_values_follow_curves(self):
        """潜在値は係数曲線に生成した順位を代入した値"""
        design = McDesign(n=50, copula=CLAYTON_2, sigma=0.2, reps=1)
        sample = generate(design, seeded_rng(1, "mc"))
        dataset, truth = sample.dataset, sample.truth
        self.assertEqual(dataset.n, 50)
        self.assertEqual(dataset.covariate_names, ("intercept", "x"))
        b_y = outcome_coefficients(truth.v_y)
        np.testing.assert_allclose(truth.y_star, b_y[:, 0] + b_y[:, 1] * dataset.x[:, 1])
        residual = dataset.y - truth.y_star
        self.assertLess(abs(float(residual.mean())), 0.15)
        self.assertAlmostEqual(float(residual.std()), 0.2, delta=0.08)

    def test_reproducible(self):
        design = McDesign(n=20, copula=CopulaSpec(CopulaFamily.FRANK, 3.0), sigma=0.1, reps=1)
        a = generate(design, seeded_rng(2, "mc")).dataset
        b = generate(design, seeded_rng(2, "mc")).dataset
        np.testing.assert_array_equal(a.y, b.y)


class TestRmse(unittest.TestCase):
    """RMSE 集計のテスト"""

    def test_aggregate(self):
        """複製内で平均した二乗誤差の複製平均の平方根"""
        errors = [np.array([1.0, 1.0]), np.array([3.0, 1.0])]
        self.assertAlmostEqual(aggregate_rmse(errors), math.sqrt((1.0 + 5.0) / 2.0))

    def test_empty(self):
        self.assertTrue(math.isnan(aggregate_rmse([])))

    def test_study_table(self):
        design = McDesign(n=100, copula=CLAYTON_2, sigma=0.1, reps=3)
        result = StudyResult([StudyRow(design, {"qr_me": 0.1234567}, replications=2, failed=1)])
        headers = result.headers()
        self.assertEqual(headers[:6], ["family", "parameter", "n", "sigma", "reps", "failed"])
        self.assertEqual(headers[6:], list(METRICS))
        row = result.table()[0]
        self.assertEqual(row[:6], ["clayton", 2.0, 100, 0.1, 2, 1])
        self.assertEqual(row[6], 0.123457)
        self.assertTrue(math.isnan(row[7]))


class TestStudy(unittest.TestCase):
    """小さな設定での実験全体のテスト"""

    def test_qr_poverty_rate_is_probability(self):
        sample = generate(McDesign(n=200, copula=CLAYTON_2, sigma=0.1, reps=1), seeded_rng(3, "mc"))
        rate = qr_poverty_rate(sample.dataset, poverty_line(), conditioning_point(), TauGrid.uniform(9, 0.1, 0.9))
        self.assertTrue(0.0 <= rate <= 1.0)

    def test_run_study_single_replicate(self):
        design = McDesign(n=60, copula=CLAYTON_2, sigma=0.1, reps=1)
        result = run_study([design], seed=4, settings=fast_settings())
        self.assertEqual(len(result.rows), 1)
        row = result.rows[0]
        self.assertEqual(row.replications + row.failed, 1)
        self.assertEqual(set(row.rmse), set(METRICS))
        if row.replications:
            self.assertTrue(all(value >= 0.0 for value in row.rmse.values()))


if __name__ == "__main__":
    unittest.main()
