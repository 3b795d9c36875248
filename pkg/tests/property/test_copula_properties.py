"""
コピュラのプロパティテスト

任意の族・パラメータ・引数で、境界条件・Fréchet 限界・条件付きコピュラの
単調性と逆関数が成り立つこと
"""

import unittest

import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from memobility.core.copula import conditional_copula, conditional_copula_inverse, copula_cdf
from memobility.core.mobility import copula_transition_matrix
from memobility.models import CopulaFamily, CopulaSpec

unit = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)
interior = st.floats(min_value=0.01, max_value=0.99, allow_nan=False)


@st.composite
def copula_specs(draw):
    family = draw(st.sampled_from(list(CopulaFamily)))
    if family is CopulaFamily.CLAYTON:
        parameter = draw(st.floats(min_value=0.05, max_value=10.0))
    elif family is CopulaFamily.GAUSSIAN:
        parameter = draw(st.floats(min_value=-0.9, max_value=0.9))
    else:
        parameter = draw(st.floats(min_value=-15.0, max_value=15.0))
        assume(abs(parameter) > 0.05)
    return CopulaSpec(family, parameter)


class TestCopulaProperties(unittest.TestCase):
    """コピュラの一般的性質"""

    @given(spec=copula_specs(), u=unit)
    @settings(max_examples=100, deadline=None)
    def test_boundary_conditions(self, spec, u):
        """C(u,0)=0, C(u,1)=u が任意の族で成り立つ"""
        self.assertAlmostEqual(float(copula_cdf(spec, u, 0.0)), 0.0, places=9)
        self.assertAlmostEqual(float(copula_cdf(spec, u, 1.0)), u, places=9)
        self.assertAlmostEqual(float(copula_cdf(spec, 1.0, u)), u, places=9)

    @given(spec=copula_specs(), u=unit, v=unit)
    @settings(max_examples=100, deadline=None)
    def test_frechet_bounds(self, spec, u, v):
        c = float(copula_cdf(spec, u, v))
        self.assertGreaterEqual(c, max(u + v - 1.0, 0.0) - 1e-9)
        self.assertLessEqual(c, min(u, v) + 1e-9)

    @given(spec=copula_specs(), u1=unit, u2=unit, v=interior)
    @settings(max_examples=100, deadline=None)
    def test_conditional_is_monotone(self, spec, u1, u2, v):
        """C₂(·, v) は u について非減少"""
        low, high = sorted((u1, u2))
        self.assertLessEqual(
            float(conditional_copula(spec, low, v)), float(conditional_copula(spec, high, v)) + 1e-7
        )

    @given(spec=copula_specs(), p=interior, v=interior)
    @settings(max_examples=100, deadline=None)
    def test_inverse_round_trip(self, spec, p, v):
        u = float(conditional_copula_inverse(spec, p, v))
        self.assertTrue(0.0 <= u <= 1.0)
        self.assertAlmostEqual(float(conditional_copula(spec, u, v)), p, places=6)

    @given(spec=copula_specs())
    @settings(max_examples=50, deadline=None)
    def test_transition_columns_sum_to_one(self, spec):
        cells = copula_transition_matrix(spec).cells
        np.testing.assert_allclose(cells.sum(axis=0), 1.0, atol=1e-9)
        self.assertTrue(np.all(cells >= -1e-12))


if __name__ == "__main__":
    unittest.main()
