"""
Gaussian-smoothing gradient estimation.

The estimate at x averages m single-point finite differences along standard
Gaussian directions:

    g_hat = 1/m * sum_i (f(x + v u_i) - f(x)) / v * u_i

which is an unbiased estimate of the gradient of the smoothed function
f_v(x) = E[f(x + v u)]. `estimator_schedule` picks v, the per-sample variance
bound sigma2 and m so that g_hat is eps_hat-close to the true gradient with
probability at least 1 - eps_hat.

The module also carries the chi-squared tail bound used to control the
Gaussian directions and the empirical accuracy harness.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from zoegd.core import as_point, sample_gaussian_directions
from zoegd.errors import InvalidInputError, OutOfRangeError, UnsupportedProblemError

logger = logging.getLogger(__name__)

DEFAULT_C_PRIME = 3.0

# directions are drawn and evaluated in blocks of this many rows
CHUNK_ROWS = 1 << 16


@dataclass(frozen=True)
class EstimatorSchedule:
    v: float
    sigma2: float
    m: int
    eps_hat: float
    c_prime: float
    d: int
    l: float
    B: float

    @property
    def smoothing_bias_bound(self):
        return smoothing_bias_bound(self)

    def as_dict(self):
        return {'v': self.v, 'sigma2': self.sigma2, 'm': self.m, 'eps_hat': self.eps_hat, 'c_prime': self.c_prime}


@dataclass(frozen=True)
class GradientEstimate:
    g_hat: np.ndarray
    queries_used: int
    base_value: float
    samples: int
    theoretical: bool


def estimator_schedule(spec, eps_hat, c_prime=DEFAULT_C_PRIME):
    """
    Smoothing radius, variance bound and sample count for accuracy `eps_hat`.

    Parameters
    ----------
    spec : ProblemSpec
    eps_hat : float
        target accuracy, strictly between 0 and 1
    c_prime : float
        estimator constant, at least 3

    Returns
    -------
    EstimatorSchedule
    """
    if not 0.0 < eps_hat < 1.0:
        raise OutOfRangeError(f'eps_hat must lie in (0, 1), got {eps_hat}')
    if not c_prime >= 3.0:
        raise OutOfRangeError(f'c_prime must be >= 3, got {c_prime}')
    if spec.B <= 1.5:
        logger.warning(f'B = {spec.B} <= 1.5: the concentration step behind the sample count assumes B > 1.5')

    d = spec.d
    v = eps_hat / (c_prime * spec.l * (d + 3) ** 1.5)
    sigma2 = 2.0 * c_prime ** 2 * (d + 4) * spec.B ** 2
    eps_hat2 = eps_hat * eps_hat
    if not eps_hat2 > 0.0:
        raise OutOfRangeError(f'sample count overflows: eps_hat={eps_hat!r} squares to zero')
    raw_m = (32.0 * sigma2 / eps_hat2) * (math.log(1.0 / eps_hat) + 0.25)
    if not math.isfinite(raw_m):
        raise OutOfRangeError(f'sample count overflows for eps_hat={eps_hat}')
    return EstimatorSchedule(v=v, sigma2=sigma2, m=max(1, math.ceil(raw_m)), eps_hat=eps_hat,
                             c_prime=c_prime, d=d, l=spec.l, B=spec.B)


def smoothing_bias_bound(schedule):
    """Upper bound on ||grad f_v(x) - grad f(x)|| for an l-smooth f."""
    return 0.5 * schedule.v * schedule.l * (schedule.d + 3) ** 1.5


def estimate_gradient(oracle, x, schedule, rng, cached_fx=None, budget_override=None, workers=None):
    """
    Estimate the gradient of the oracle's function at `x`.

    Parameters
    ----------
    oracle : ZeroOrderOracle
    x : array-like
    schedule : EstimatorSchedule
    rng : SeededRng
        the run's stream; all directions are drawn from it before any
        evaluation of the corresponding block
    cached_fx : float, optional
        f(x) already known to the caller; saves one query
    budget_override : int, optional
        sample count replacing schedule.m (the result is then flagged as
        non-theoretical)
    workers : int, optional
        thread count for non-vectorized oracles

    Returns
    -------
    GradientEstimate
    """
    d = oracle.dimension
    point = as_point(x, d)
    if budget_override is not None and int(budget_override) < 1:
        raise InvalidInputError(f'budget_override must be >= 1, got {budget_override}')
    m = int(budget_override) if budget_override is not None else schedule.m

    queries = 0
    if cached_fx is None:
        base = oracle.evaluate(point)
        queries += 1
    else:
        base = float(cached_fx)

    total = np.zeros(d)
    done = 0
    while done < m:
        rows = min(CHUNK_ROWS, m - done)
        directions = sample_gaussian_directions(rng, rows, d)
        values = oracle.evaluate_batch(point + schedule.v * directions, workers=workers)
        weights = (values - base) / schedule.v
        total += np.sum(weights[:, np.newaxis] * directions, axis=0)
        done += rows
        queries += rows
        if rows == CHUNK_ROWS:
            logger.debug(f'estimate at {point.tolist()}: {done}/{m} samples')

    return GradientEstimate(g_hat=total / m, queries_used=queries, base_value=base, samples=m,
                            theoretical=budget_override is None)


def gaussian_tail_bound(d, a2):
    """
    Upper bound on P(||u||^2 > a2) for u ~ N(0, I_d):

        (d / a2)^(-d/2) * exp(-(a2 - d) / 2)

    obtained from the chi-squared moment generating function at the
    optimal t = (1 - d/a2) / 2; valid for a2 > d only. Clamped at 1.
    """
    d = int(d)
    if d < 1:
        raise InvalidInputError(f'dimension must be >= 1, got {d}')
    if not a2 > d:
        raise InvalidInputError(f'a2 must exceed d = {d}, got {a2}')
    log_bound = -0.5 * d * math.log(d / a2) - 0.5 * (a2 - d)
    return min(1.0, math.exp(log_bound))


def empirical_tail_probability(d, a2, draws, rng, chunk=250_000):
    """Monte-Carlo frequency of ||u||^2 > a2 over `draws` Gaussian vectors."""
    if int(draws) < 1:
        raise InvalidInputError(f'draws must be >= 1, got {draws}')
    exceed = 0
    left = int(draws)
    while left > 0:
        rows = min(chunk, left)
        u = sample_gaussian_directions(rng, rows, d)
        exceed += int(np.count_nonzero(np.einsum('ij,ij->i', u, u) > a2))
        left -= rows
    return exceed / int(draws)


def exact_tail_probability(d, a2):
    """P(chi2_d > a2), the reference the bound is compared against."""
    return float(stats.chi2.sf(a2, d))


def estimation_errors(problem, x, schedule, trials, rng, budget_override=None, oracle=None):
    """
    Distances ||g_hat - grad f(x)|| of `trials` independent estimates at `x`.

    `problem` is a testbed problem exposing `analytic_gradient`; a fresh
    oracle is built from it unless one is given. f(x) is queried once and
    shared by all trials.
    """
    gradient = getattr(problem, 'analytic_gradient', None)
    if gradient is None:
        raise UnsupportedProblemError(f'{getattr(problem, "name", problem)!r} has no analytic gradient')
    if int(trials) < 1:
        raise InvalidInputError(f'trials must be >= 1, got {trials}')
    oracle = oracle or problem.fresh_oracle()
    point = as_point(x, oracle.dimension)
    truth = gradient(point)
    base = oracle.evaluate(point)

    errors = np.empty(int(trials))
    for i in range(int(trials)):
        est = estimate_gradient(oracle, point, schedule, rng, cached_fx=base, budget_override=budget_override)
        errors[i] = np.linalg.norm(est.g_hat - truth)
    return errors


def empirical_accuracy(problem, x, schedule, trials, rng, budget_override=None, oracle=None):
    """
    Fraction of `trials` independent estimates at `x` that land within
    schedule.eps_hat of the analytic gradient.
    """
    errors = estimation_errors(problem, x, schedule, trials, rng, budget_override, oracle)
    return float(np.mean(errors <= schedule.eps_hat))
