import unittest

import numpy as np

from zoegd.core import SeededRng
from zoegd.errors import CatalogError, InvalidInputError
from zoegd.testbed import (CATALOG, StationaryKind, central_difference_gradient, classify_point, make_benchmark,
                           quadratic)


class TestCatalog(unittest.TestCase):

    def test_bowl_identities(self):
        bowl = make_benchmark('bowl', 3)
        x = np.array([1.0, 2.0, 3.0])
        self.assertEqual(7.0, bowl.oracle.evaluate(x))
        np.testing.assert_array_equal(x, bowl.analytic_gradient(x))
        self.assertAlmostEqual(1.0, bowl.analytic_hessian_min_eig(x))

    def test_saddle_quadratic_origin(self):
        saddle = make_benchmark('saddle_quadratic', 2)
        origin = saddle.known_saddles[0]
        np.testing.assert_array_equal([0.0, 0.0], saddle.analytic_gradient(origin))
        self.assertAlmostEqual(-1.0, saddle.analytic_hessian_min_eig(origin))
        np.testing.assert_allclose([0.0, 1.0], np.abs(saddle.min_eigvec(origin)))

    def test_saddle_quadratic_needs_two_dimensions(self):
        with self.assertRaises(InvalidInputError):
            make_benchmark('saddle_quadratic', 1)

    def test_quartic_minima(self):
        quartic = make_benchmark('saddle_quartic', 3)
        self.assertEqual(2, len(quartic.known_minima))
        for minimum in quartic.known_minima:
            np.testing.assert_allclose(np.zeros(3), quartic.analytic_gradient(minimum), atol=1e-15)
            self.assertGreater(quartic.analytic_hessian_min_eig(minimum), 0.0)
            self.assertEqual(0.0, quartic.value(minimum))
        self.assertAlmostEqual(-1.0, quartic.analytic_hessian_min_eig(quartic.known_saddles[0]))

    def test_constant(self):
        constant = make_benchmark('constant', 4)
        self.assertEqual(7.0, constant.oracle.evaluate(np.arange(4.0)))

    def test_linear_clip_gradient_bound(self):
        clip = make_benchmark('linear_clip', 5)
        rng = SeededRng(8)
        for _ in range(200):
            x = rng.standard_normal(5) * 20
            self.assertLessEqual(np.linalg.norm(clip.analytic_gradient(x)), clip.spec.B + 1e-12)

    def test_unknown_name(self):
        with self.assertRaises(CatalogError) as ctx:
            make_benchmark('rosenbrock', 2)
        for name in CATALOG:
            self.assertIn(name, str(ctx.exception))
        self.assertIsInstance(ctx.exception, KeyError)

    def test_fresh_oracles_count_separately(self):
        bowl = make_benchmark('bowl', 2)
        a, b = bowl.fresh_oracle(), bowl.fresh_oracle()
        a.evaluate([1.0, 1.0])
        self.assertEqual(1, a.query_count)
        self.assertEqual(0, b.query_count)

    def test_delta_f(self):
        bowl = make_benchmark('bowl', 2)
        self.assertEqual(25.0, bowl.delta_f([5.0, 5.0]))
        self.assertEqual(1.0, bowl.delta_f([0.1, 0.0]))


class TestFidelity(unittest.TestCase):

    def test_finite_differences(self):
        for name in CATALOG:
            problem = make_benchmark(name, 3)
            self.assertLessEqual(problem.check_gradient(SeededRng(1), samples=100), 1e-6, name)

    def test_declared_constants_dominate(self):
        for name in CATALOG:
            problem = make_benchmark(name, 3)
            l_ratio, rho_ratio = problem.measure_lipschitz(SeededRng(2), pairs=10_000)
            self.assertLessEqual(l_ratio, problem.spec.l * (1 + 1e-9), name)
            self.assertLessEqual(rho_ratio, problem.spec.rho * (1 + 1e-9), name)

    def test_central_difference_quadratic(self):
        A = np.array([[2.0, 1.0], [1.0, 3.0]])
        b = np.array([1.0, -1.0])
        f, grad = quadratic(A, b)
        x = np.array([0.5, -2.0])
        np.testing.assert_allclose(grad(x), central_difference_gradient(f, x), rtol=1e-8)


class TestClassify(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.saddle = make_benchmark('saddle_quadratic', 2)
        cls.bowl = make_benchmark('bowl', 2)

    def test_saddle_is_first_order_only(self):
        cls = classify_point(self.saddle, [0.0, 0.0], 0.01, 1.0)
        self.assertIs(StationaryKind.FIRST_ORDER_ONLY, cls.kind)
        self.assertEqual(0.0, cls.grad_norm)
        self.assertAlmostEqual(-1.0, cls.min_eig)

    def test_bowl_minimum(self):
        for eps in (1e-6, 0.1, 0.9):
            self.assertIs(StationaryKind.SECOND_ORDER, classify_point(self.bowl, [0.0, 0.0], eps, 5.0).kind)

    def test_not_stationary(self):
        cls = classify_point(self.saddle, [0.0, 2.0], 0.01, 1.0)
        self.assertIs(StationaryKind.NOT_STATIONARY, cls.kind)
        self.assertAlmostEqual(2.0, cls.grad_norm)

    def test_boundaries_are_inclusive(self):
        # gradient norm exactly epsilon
        self.assertIs(StationaryKind.SECOND_ORDER, classify_point(self.bowl, [0.5, 0.0], 0.5, 1.0).kind)
        # min eigenvalue exactly -sqrt(rho * epsilon)
        self.assertIs(StationaryKind.SECOND_ORDER, classify_point(self.saddle, [0.0, 0.0], 1.0, 1.0).kind)

    def test_classification_is_consistent(self):
        rng = SeededRng(4)
        for _ in range(100):
            x = rng.standard_normal(2) * 0.1
            cls = classify_point(self.saddle, x, 0.05, 1.0)
            if cls.grad_norm > 0.05:
                self.assertIs(StationaryKind.NOT_STATIONARY, cls.kind)
            elif cls.min_eig >= -np.sqrt(0.05):
                self.assertIs(StationaryKind.SECOND_ORDER, cls.kind)
            else:
                self.assertIs(StationaryKind.FIRST_ORDER_ONLY, cls.kind)


if __name__ == '__main__':
    unittest.main()
