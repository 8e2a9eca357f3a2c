import dataclasses
import math
import unittest

import numpy as np

from zoegd.core import ProblemSpec, SeededRng, ZeroOrderOracle
from zoegd.errors import InvalidInputError, OutOfRangeError, UnsupportedProblemError
from zoegd.estimator import (empirical_accuracy, empirical_tail_probability, estimate_gradient, estimator_schedule,
                             exact_tail_probability, gaussian_tail_bound, smoothing_bias_bound)
from zoegd.testbed import linear, make_benchmark, quadratic


def sample_count(d, B, eps_hat, c_prime=3.0):
    sigma2 = 2.0 * c_prime ** 2 * (d + 4) * B ** 2
    return math.ceil(32.0 * sigma2 / eps_hat ** 2 * (math.log(1.0 / eps_hat) + 0.25))


class TestSchedule(unittest.TestCase):

    def test_d10(self):
        schedule = estimator_schedule(ProblemSpec(d=10, l=1.0, rho=1.0, B=2.0), 0.1)
        self.assertAlmostEqual(7.1115e-4, schedule.v, delta=1e-8)
        self.assertEqual(1008.0, schedule.sigma2)
        self.assertEqual(sample_count(10, 2.0, 0.1), schedule.m)
        self.assertLessEqual(abs(schedule.m - 8_233_620), 1)

    def test_d2(self):
        schedule = estimator_schedule(ProblemSpec(d=2, l=1.0, rho=1.0, B=2.0), 0.5)
        self.assertEqual(432.0, schedule.sigma2)
        self.assertEqual(sample_count(2, 2.0, 0.5), schedule.m)
        self.assertLessEqual(abs(schedule.m - 52_154), 1)

    def test_out_of_range(self):
        spec = ProblemSpec(d=2, l=1.0, rho=1.0, B=2.0)
        for eps_hat in (0.0, 1.0, 1.5, -0.1):
            with self.assertRaises(OutOfRangeError):
                estimator_schedule(spec, eps_hat)
        with self.assertRaises(OutOfRangeError):
            estimator_schedule(spec, 0.1, c_prime=2.5)

    def test_sample_count_overflow(self):
        spec = ProblemSpec(d=2, l=1.0, rho=1.0, B=2.0)
        # eps_hat squared underflows to zero
        with self.assertRaises(OutOfRangeError):
            estimator_schedule(spec, 1e-170)

    def test_small_gradient_bound_warns(self):
        with self.assertLogs('zoegd.estimator', level='WARNING'):
            estimator_schedule(ProblemSpec(d=2, l=1.0, rho=1.0, B=1.0), 0.1)

    def test_bias_bound(self):
        schedule = estimator_schedule(ProblemSpec(d=4, l=2.0, rho=1.0, B=3.0), 0.2)
        # v * l * (d+3)^1.5 / 2 reduces to eps_hat / (2 c')
        self.assertAlmostEqual(0.2 / 6.0, smoothing_bias_bound(schedule), places=12)
        self.assertEqual(smoothing_bias_bound(schedule), schedule.smoothing_bias_bound)


class TestEstimate(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.constant = make_benchmark('constant', 3)
        cls.schedule = estimator_schedule(ProblemSpec(d=3, l=1.0, rho=1.0, B=2.0), 0.1)

    def test_constant_is_exactly_zero(self):
        picker = SeededRng(0)
        for k in range(100):
            x = picker.standard_normal(3) * 10
            m = int(picker.generator.integers(1, 1001))
            est = estimate_gradient(self.constant.fresh_oracle(), x, self.schedule, SeededRng(k), budget_override=m)
            np.testing.assert_array_equal(np.zeros(3), est.g_hat)

    def test_query_accounting(self):
        oracle = self.constant.fresh_oracle()
        est = estimate_gradient(oracle, np.zeros(3), self.schedule, SeededRng(1), budget_override=40)
        self.assertEqual(41, est.queries_used)
        self.assertFalse(est.theoretical)
        est = estimate_gradient(oracle, np.zeros(3), self.schedule, SeededRng(1), cached_fx=7.0, budget_override=40)
        self.assertEqual(40, est.queries_used)
        self.assertEqual(81, oracle.query_count)

    def test_same_seed_same_estimate(self):
        f, _ = quadratic(np.diag([1.0, 2.0, 3.0]), np.ones(3))
        oracle = ZeroOrderOracle(f, 3, vectorized=True)
        a = estimate_gradient(oracle, [1.0, 0.0, -1.0], self.schedule, SeededRng(9), budget_override=100)
        b = estimate_gradient(oracle, [1.0, 0.0, -1.0], self.schedule, SeededRng(9), budget_override=100)
        np.testing.assert_array_equal(a.g_hat, b.g_hat)

    def test_linear_unbiased(self):
        g = np.array([1.0, -2.0, 0.5])
        f, _ = linear(g)
        oracle = ZeroOrderOracle(f, 3, vectorized=True)
        est = estimate_gradient(oracle, [0.3, 0.3, 0.3], self.schedule, SeededRng(2), budget_override=20_000)
        np.testing.assert_allclose(g, est.g_hat, atol=0.12)

    def test_threaded_oracle_matches_vectorized(self):
        f, _ = quadratic(np.eye(3), np.zeros(3))
        plain = ZeroOrderOracle(lambda x: float(f(x)), 3)
        fast = ZeroOrderOracle(f, 3, vectorized=True)
        a = estimate_gradient(plain, [1.0, 2.0, 3.0], self.schedule, SeededRng(4), budget_override=64, workers=3)
        b = estimate_gradient(fast, [1.0, 2.0, 3.0], self.schedule, SeededRng(4), budget_override=64)
        np.testing.assert_allclose(a.g_hat, b.g_hat, rtol=1e-9)

    def test_bad_budget(self):
        with self.assertRaises(InvalidInputError):
            estimate_gradient(self.constant.fresh_oracle(), np.zeros(3), self.schedule, SeededRng(0),
                              budget_override=0)


class TestBias(unittest.TestCase):

    def test_smoothing_bias_on_quartic(self):
        quartic = make_benchmark('saddle_quartic', 2)
        schedule = dataclasses.replace(estimator_schedule(quartic.spec, 0.9), v=0.2)
        x = np.array([0.5, 0.5])
        est = estimate_gradient(quartic.fresh_oracle(), x, schedule, SeededRng(31), budget_override=1_000_000)
        grad = quartic.analytic_gradient(x)
        # E[(x1 + v u1)^3] = x1^3 + 3 x1 v^2, the other terms are linear
        smoothed = grad + np.array([3.0 * x[0] * schedule.v ** 2, 0.0])
        np.testing.assert_allclose(smoothed, est.g_hat, atol=5e-3)
        self.assertLessEqual(np.linalg.norm(smoothed - grad), smoothing_bias_bound(schedule))
        self.assertLessEqual(np.linalg.norm(est.g_hat - grad), smoothing_bias_bound(schedule) + 5e-3)

    def test_quadratic_has_no_smoothing_bias(self):
        A = np.diag([1.0, 2.0, 3.0])
        b = np.ones(3)
        f, grad = quadratic(A, b)
        oracle = ZeroOrderOracle(f, 3, vectorized=True)
        x = np.array([1.0, 0.0, -1.0])
        base = estimator_schedule(ProblemSpec(d=3, l=3.0, rho=1.0, B=5.0), 0.5)
        for v in (1e-3, 1.0):
            est = estimate_gradient(oracle, x, dataclasses.replace(base, v=v), SeededRng(8),
                                    budget_override=1_000_000)
            np.testing.assert_allclose(A @ x + b, est.g_hat, atol=0.05)
        np.testing.assert_allclose(A @ x + b, grad(x))


class TestTailBound(unittest.TestCase):

    def test_value(self):
        self.assertAlmostEqual(0.017699, gaussian_tail_bound(5, 20.0), places=6)

    def test_invalid(self):
        with self.assertRaises(InvalidInputError):
            gaussian_tail_bound(5, 5.0)
        with self.assertRaises(InvalidInputError):
            gaussian_tail_bound(5, 3.0)

    def test_clamped(self):
        self.assertLessEqual(gaussian_tail_bound(50, 50.5), 1.0)

    def test_bound_dominates(self):
        rng = SeededRng(123)
        draws = 1_000_000
        for d, a2 in ((2, 8.0), (5, 20.0), (10, 30.0)):
            bound = gaussian_tail_bound(d, a2)
            freq = empirical_tail_probability(d, a2, draws, rng)
            se = math.sqrt(max(freq * (1 - freq), 1e-12) / draws)
            self.assertLessEqual(freq, bound + 3 * se)
            self.assertLessEqual(exact_tail_probability(d, a2), bound)
            self.assertAlmostEqual(exact_tail_probability(d, a2), freq, delta=5 * se + 1e-5)


class TestAccuracy(unittest.TestCase):

    def test_accuracy_floor(self):
        bowl = make_benchmark('bowl', 2)
        schedule = estimator_schedule(ProblemSpec(d=2, l=1.0, rho=1.0, B=2.0), 0.5)
        trials = 500
        rate = empirical_accuracy(bowl, [1.0, 0.0], schedule, trials, SeededRng(2024))
        self.assertGreaterEqual(rate, 0.5 - 3 * math.sqrt(0.25 / trials))

    def test_single_sample_is_inaccurate(self):
        bowl = make_benchmark('bowl', 2)
        schedule = estimator_schedule(ProblemSpec(d=2, l=1.0, rho=1.0, B=2.0), 0.5)
        rate = empirical_accuracy(bowl, [1.0, 0.0], schedule, 200, SeededRng(5), budget_override=1)
        self.assertLess(rate, 0.9)

    def test_needs_gradient(self):
        class Opaque:
            analytic_gradient = None
            name = 'opaque'

        schedule = estimator_schedule(ProblemSpec(d=2, l=1.0, rho=1.0, B=2.0), 0.5)
        with self.assertRaises(UnsupportedProblemError):
            empirical_accuracy(Opaque(), [0.0, 0.0], schedule, 5, SeededRng(0))


if __name__ == '__main__':
    unittest.main()
