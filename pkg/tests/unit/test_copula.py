"""
コピュラのユニットテスト
"""

import unittest

import numpy as np
from scipy.stats import kendalltau, multivariate_normal, norm

from memobility.core.copula import (
    ClaytonCopula,
    FrankCopula,
    GaussianCopula,
    conditional_copula,
    conditional_copula_inverse,
    copula_cdf,
    copula_pdf,
    copula_sample,
    kendall_tau,
    make_copula,
    parameter_from_kendall_tau,
)
from memobility.models import CopulaFamily, CopulaSpec

SPECS = [
    CopulaSpec(CopulaFamily.CLAYTON, 2.0),
    CopulaSpec(CopulaFamily.CLAYTON, 0.3),
    CopulaSpec(CopulaFamily.GAUSSIAN, 0.6),
    CopulaSpec(CopulaFamily.GAUSSIAN, -0.4),
    CopulaSpec(CopulaFamily.FRANK, 4.0),
    CopulaSpec(CopulaFamily.FRANK, -2.5),
]

INTERIOR = np.array([0.1, 0.3, 0.5, 0.7, 0.9])


class TestBoundaryConditions(unittest.TestCase):
    """境界条件のテスト"""

    def test_cdf_boundaries(self):
        """C(u,0)=C(0,v)=0, C(u,1)=u, C(1,v)=v"""
        for spec in SPECS:
            with self.subTest(spec=spec):
                np.testing.assert_allclose(copula_cdf(spec, INTERIOR, 0.0), 0.0)
                np.testing.assert_allclose(copula_cdf(spec, 0.0, INTERIOR), 0.0)
                np.testing.assert_allclose(copula_cdf(spec, INTERIOR, 1.0), INTERIOR)
                np.testing.assert_allclose(copula_cdf(spec, 1.0, INTERIOR), INTERIOR)

    def test_conditional_boundaries(self):
        """C₂(0,v)=0, C₂(1,v)=1"""
        for spec in SPECS:
            with self.subTest(spec=spec):
                np.testing.assert_allclose(conditional_copula(spec, 0.0, INTERIOR), 0.0)
                np.testing.assert_allclose(conditional_copula(spec, 1.0, INTERIOR), 1.0)

    def test_frechet_bounds(self):
        u, v = np.meshgrid(INTERIOR, INTERIOR)
        for spec in SPECS:
            with self.subTest(spec=spec):
                c = copula_cdf(spec, u, v)
                self.assertTrue(np.all(c >= np.maximum(u + v - 1.0, 0.0) - 1e-12))
                self.assertTrue(np.all(c <= np.minimum(u, v) + 1e-12))

    def test_rejects_arguments_outside_unit_square(self):
        with self.assertRaises(ValueError):
            copula_cdf(SPECS[0], 1.5, 0.5)
        with self.assertRaises(ValueError):
            conditional_copula(SPECS[0], 0.5, -0.1)


class TestDerivatives(unittest.TestCase):
    """CDF・条件付きコピュラ・密度の整合性"""

    def test_hfun_is_derivative_in_v(self):
        """C₂(u,v) は C の v に関する偏微分"""
        step = 1e-5
        for spec in SPECS:
            with self.subTest(spec=spec):
                for u in (0.2, 0.6):
                    for v in (0.3, 0.7):
                        numeric = (copula_cdf(spec, u, v + step) - copula_cdf(spec, u, v - step)) / (2 * step)
                        self.assertAlmostEqual(conditional_copula(spec, u, v), numeric, places=4)

    def test_pdf_is_derivative_of_hfun(self):
        """c(u,v) は C₂ の u に関する偏微分"""
        step = 1e-5
        for spec in SPECS:
            with self.subTest(spec=spec):
                for u in (0.25, 0.75):
                    for v in (0.4, 0.8):
                        numeric = (
                            conditional_copula(spec, u + step, v) - conditional_copula(spec, u - step, v)
                        ) / (2 * step)
                        self.assertAlmostEqual(copula_pdf(spec, u, v) / numeric, 1.0, places=3)

    def test_inverse_conditional(self):
        """C₂(C₂⁻¹(p; v), v) = p"""
        p = np.array([0.05, 0.3, 0.5, 0.8, 0.95])
        for spec in SPECS:
            with self.subTest(spec=spec):
                for v in (0.1, 0.5, 0.9):
                    u = conditional_copula_inverse(spec, p, np.full(p.size, v))
                    np.testing.assert_allclose(conditional_copula(spec, u, np.full(p.size, v)), p, atol=1e-8)

    def test_log_pdf_matches_pdf(self):
        copula = make_copula(SPECS[0])
        self.assertAlmostEqual(np.exp(copula.log_pdf(0.3, 0.4)), copula.pdf(0.3, 0.4))


class TestFamilies(unittest.TestCase):
    """族ごとの閉形式のテスト"""

    def test_clayton_closed_form(self):
        u, v, d = 0.3, 0.6, 2.0
        expected = (u ** -d + v ** -d - 1.0) ** (-1.0 / d)
        self.assertAlmostEqual(ClaytonCopula(d).cdf(u, v), expected, places=12)

    def test_clayton_tau_round_trip(self):
        self.assertAlmostEqual(ClaytonCopula(2.0).kendall_tau(), 0.5)
        self.assertAlmostEqual(ClaytonCopula.parameter_from_tau(0.5), 2.0)

    def test_gaussian_matches_bivariate_normal(self):
        """Gaussian コピュラの CDF は2変量正規分布の CDF と一致"""
        rho = 0.6
        for u, v in ((0.3, 0.6), (0.05, 0.9), (0.7, 0.2)):
            expected = multivariate_normal(mean=[0.0, 0.0], cov=[[1.0, rho], [rho, 1.0]]).cdf(
                [norm.ppf(u), norm.ppf(v)]
            )
            self.assertAlmostEqual(GaussianCopula(rho).cdf(u, v), float(expected), places=4)

    def test_gaussian_independence(self):
        self.assertAlmostEqual(GaussianCopula(0.0).cdf(0.3, 0.6), 0.18)

    def test_gaussian_tau(self):
        self.assertAlmostEqual(GaussianCopula(0.5).kendall_tau(), 2.0 / np.pi * np.arcsin(0.5))
        self.assertAlmostEqual(GaussianCopula.parameter_from_tau(GaussianCopula(0.5).kendall_tau()), 0.5)

    def test_frank_tau_sign_and_order(self):
        """Frank の τ は θ と同符号で θ について増加"""
        self.assertGreater(FrankCopula(2.0).kendall_tau(), 0.0)
        self.assertLess(FrankCopula(-2.0).kendall_tau(), 0.0)
        self.assertLess(FrankCopula(2.0).kendall_tau(), FrankCopula(6.0).kendall_tau())
        self.assertAlmostEqual(FrankCopula(2.0).kendall_tau(), -FrankCopula(-2.0).kendall_tau(), places=6)

    def test_parameter_from_kendall_tau(self):
        """τ からの逆算は kendall_tau の逆写像"""
        for spec in SPECS:
            with self.subTest(spec=spec):
                recovered = parameter_from_kendall_tau(spec.family, kendall_tau(spec))
                self.assertEqual(recovered.family, spec.family)
                self.assertAlmostEqual(recovered.parameter, spec.parameter, places=4)
        with self.assertRaises(ValueError):
            parameter_from_kendall_tau(CopulaFamily.CLAYTON, 1.0)


class TestSampling(unittest.TestCase):
    """乱数生成のテスト"""

    def test_sample_kendall_tau(self):
        """標本の Kendall の τ が理論値に近いこと"""
        for spec in (SPECS[0], SPECS[2], SPECS[4], SPECS[5]):
            with self.subTest(spec=spec):
                u, v = copula_sample(spec, 4000, np.random.default_rng(1))
                self.assertEqual(u.shape, (4000,))
                self.assertTrue(np.all((u >= 0.0) & (u <= 1.0)))
                sample_tau, _ = kendalltau(u, v)
                self.assertAlmostEqual(sample_tau, kendall_tau(spec), delta=0.04)

    def test_sample_is_reproducible(self):
        a = copula_sample(SPECS[0], 10, np.random.default_rng(5))
        b = copula_sample(SPECS[0], 10, np.random.default_rng(5))
        np.testing.assert_array_equal(a[0], b[0])

    def test_negative_size(self):
        with self.assertRaises(ValueError):
            copula_sample(SPECS[0], -1, np.random.default_rng(0))


AXIOM_SPECS = [
    CopulaSpec(CopulaFamily.CLAYTON, 0.5),
    CopulaSpec(CopulaFamily.CLAYTON, 1.5),
    CopulaSpec(CopulaFamily.CLAYTON, 5.0),
    CopulaSpec(CopulaFamily.GAUSSIAN, -0.8),
    CopulaSpec(CopulaFamily.GAUSSIAN, 0.0),
    CopulaSpec(CopulaFamily.GAUSSIAN, 0.5),
    CopulaSpec(CopulaFamily.FRANK, -5.0),
    CopulaSpec(CopulaFamily.FRANK, 3.0),
]


class TestAxioms(unittest.TestCase):
    """101×101 格子上の 2-増加性と密度の全質量"""

    def test_two_increasing(self):
        """格子の全ての長方形で C(u2,v2) - C(u1,v2) - C(u2,v1) + C(u1,v1) ≥ 0"""
        grid = np.linspace(0.0, 1.0, 101)
        u, v = np.meshgrid(grid, grid, indexing="ij")
        for spec in AXIOM_SPECS:
            with self.subTest(spec=spec):
                c = copula_cdf(spec, u, v)
                volume = c[1:, 1:] - c[:-1, 1:] - c[1:, :-1] + c[:-1, :-1]
                # Gaussian の CDF は数値積分なので誤差を広めに取る
                tolerance = 1e-10 if spec.family is CopulaFamily.GAUSSIAN else 1e-12
                self.assertGreaterEqual(float(volume.min()), -tolerance)
                self.assertAlmostEqual(float(volume.sum()), 1.0, places=10)

    def test_density_integrates_to_one(self):
        """正規スコア z = Φ⁻¹(u) に変数変換した Gauss-Legendre 求積で ∬c = 1 ± 1e-3"""
        nodes, weights = np.polynomial.legendre.leggauss(300)
        z = 8.0 * nodes
        w = 8.0 * weights * norm.pdf(z)
        za, zb = np.meshgrid(z, z, indexing="ij")
        for spec in AXIOM_SPECS:
            if spec.family is CopulaFamily.CLAYTON and spec.parameter > 2.0:
                continue
            with self.subTest(spec=spec):
                density = copula_pdf(spec, norm.cdf(za), norm.cdf(zb))
                self.assertAlmostEqual(float(w @ density @ w), 1.0, delta=1e-3)


if __name__ == "__main__":
    unittest.main()
