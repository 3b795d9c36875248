"""
モデル型・移動指標・ライフサイクル補正のプロパティテスト
"""

import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from memobility.core.lifecycle import estimate_lambdas
from memobility.core.mobility import SimulatedPanel, transition_matrix
from memobility.models import GaussianMixture, QuantileProcess, TauGrid

positive = st.floats(min_value=0.05, max_value=10.0, allow_nan=False)
location = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False)


class TestMixtureProperties(unittest.TestCase):
    """GaussianMixture.normalized の不変条件"""

    @given(data=st.lists(st.tuples(positive, location, positive), min_size=1, max_size=5))
    @settings(max_examples=100)
    def test_normalized_is_centered_and_sorted(self, data):
        weights, means, sds = zip(*data)
        mixture = GaussianMixture.normalized(weights, means, sds)
        self.assertAlmostEqual(float(mixture.weights.sum()), 1.0, places=12)
        self.assertAlmostEqual(float(mixture.weights @ mixture.means), 0.0, places=10)
        self.assertTrue(np.all(np.diff(mixture.means) >= 0.0))
        self.assertTrue(np.all(mixture.sds > 0.0))


class TestQuantileProcessProperties(unittest.TestCase):
    """係数の補間の性質"""

    @given(
        steps=arrays(np.float64, (4, 2), elements=st.floats(min_value=0.0, max_value=5.0)),
        base=arrays(np.float64, (2,), elements=location),
        tau=st.floats(min_value=0.1, max_value=0.9),
    )
    @settings(max_examples=100)
    def test_beta_lies_between_neighbouring_knots(self, steps, base, tau):
        """格子内の β(τ) は隣接する格子点の係数の間にある"""
        grid = TauGrid([0.1, 0.3, 0.5, 0.7, 0.9])
        coefficients = np.vstack([base, base + np.cumsum(steps, axis=0)])
        qp = QuantileProcess(grid, coefficients)
        beta = qp.beta(tau)
        l = min(int(np.searchsorted(grid.knots, tau, side="right")) - 1, grid.size - 2)
        low = np.minimum(coefficients[l], coefficients[l + 1])
        high = np.maximum(coefficients[l], coefficients[l + 1])
        self.assertTrue(np.all(beta >= low - 1e-9))
        self.assertTrue(np.all(beta <= high + 1e-9))

    @given(tau=st.floats(min_value=0.0, max_value=1.0))
    @settings(max_examples=50)
    def test_beta_is_clamped_outside_grid(self, tau):
        qp = QuantileProcess(TauGrid([0.2, 0.8]), [[0.0], [1.0]])
        value = float(qp.beta(tau)[0])
        self.assertTrue(0.0 <= value <= 1.0)


class TestTransitionProperties(unittest.TestCase):
    """経験遷移行列の性質"""

    @given(
        y=arrays(np.float64, 60, elements=st.floats(min_value=-100.0, max_value=100.0)),
        t=arrays(np.float64, 60, elements=st.floats(min_value=-100.0, max_value=100.0), unique=True),
    )
    @settings(max_examples=50)
    def test_columns_sum_to_one(self, y, t):
        """親の値が相異なれば全ての階級が埋まり、各列の和は1"""
        panel = SimulatedPanel(y[:, None], t[:, None], np.arange(60)[:, None])
        matrix = transition_matrix(panel)
        np.testing.assert_allclose(matrix.column_sums(), 1.0, atol=1e-12)
        self.assertEqual(int(matrix.parent_counts.sum()), 60)


class TestLifecycleProperties(unittest.TestCase):
    """λ の推定の性質"""

    @given(
        values=arrays(np.float64, 30, elements=st.floats(min_value=0.5, max_value=50.0)),
        scale=st.floats(min_value=0.01, max_value=100.0),
    )
    @settings(max_examples=50)
    def test_lambdas_are_scale_invariant(self, values, scale):
        """所得の単位を変えても λ は変わらない"""
        ages = np.repeat([30, 35, 40], 10)
        original = estimate_lambdas(values, ages, 35)
        rescaled = estimate_lambdas(values * scale, ages, 35)
        self.assertEqual(original.lambdas[35], 1.0)
        for age in (30, 40):
            self.assertAlmostEqual(rescaled.lambdas[age], original.lambdas[age], places=9)


if __name__ == "__main__":
    unittest.main()
