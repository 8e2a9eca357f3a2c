"""
Shared domain types: the zeroth-order oracle with its query accounting, the
problem constants the schedules consume, and the seeded random stream every
run threads through its sampling.

The oracle is the only access the optimizer has to the objective. All
sampling draws from one `SeededRng` per run, so a run is reproducible from
its seed alone.
"""

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from zoegd.errors import InvalidInputError, OracleFailureError
from zoegd.utils.workers import worker_count

logger = logging.getLogger(__name__)


def as_point(x, d):
    """
    Validate `x` as a length-`d` vector of finite floats and return it as a
    float64 array (a copy, so callers may keep mutating their own buffer).

    Parameters
    ----------
    x : array-like
    d : int

    Returns
    -------
    numpy.ndarray
    """
    point = np.array(x, dtype=np.float64)
    if point.ndim != 1 or point.shape[0] != d:
        raise InvalidInputError(f'expected a point of length {d}, got shape {point.shape}')
    if not np.all(np.isfinite(point)):
        raise InvalidInputError(f'non-finite coordinate in {point.tolist()}')
    return point


class ZeroOrderOracle:
    """
    Black-box access to f: R^d -> R with exact query accounting.

    Parameters
    ----------
    func : callable
        the objective; with `vectorized=True` it must accept an array whose
        last axis has length d and return one value per row
    dimension : int
    vectorized : bool
        whether `func` evaluates a whole (n, d) batch in one call
    name : str
        label used in log messages

    `func` must be a pure function of its input so that concurrent
    `evaluate` calls are safe; the counter itself is guarded by a lock.
    """

    def __init__(self, func, dimension, vectorized=False, name='oracle'):
        if int(dimension) < 1:
            raise InvalidInputError(f'dimension must be >= 1, got {dimension}')
        self._func = func
        self.dimension = int(dimension)
        self.vectorized = vectorized
        self.name = name
        self._count = 0
        self._lock = threading.Lock()

    @property
    def query_count(self):
        return self._count

    def _add_queries(self, n):
        with self._lock:
            self._count += n

    def _call(self, point):
        if self.vectorized:
            return float(np.asarray(self._func(point[np.newaxis, :]))[0])
        return float(self._func(point))

    def evaluate(self, x):
        point = as_point(x, self.dimension)
        self._add_queries(1)
        value = self._call(point)
        if not np.isfinite(value):
            logger.error(f'{self.name}: non-finite value {value} at {point.tolist()}')
            raise OracleFailureError(point, value)
        return value

    def evaluate_batch(self, points, workers=None):
        """
        Evaluate f on every row of `points` (shape (n, d)); n queries are
        counted. Non-vectorized oracles fan the rows out over a thread pool
        when more than one worker is available; values come back in row order.
        """
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != self.dimension:
            raise InvalidInputError(f'expected an (n, {self.dimension}) batch, got shape {points.shape}')
        if not np.all(np.isfinite(points)):
            raise InvalidInputError('non-finite coordinate in query batch')
        n = points.shape[0]
        self._add_queries(n)
        if self.vectorized:
            values = np.asarray(self._func(points), dtype=np.float64).reshape(n)
        else:
            workers = worker_count(workers)
            if workers > 1 and n > 1:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    values = np.fromiter(pool.map(lambda p: float(self._func(p)), points), dtype=np.float64, count=n)
            else:
                values = np.fromiter((float(self._func(p)) for p in points), dtype=np.float64, count=n)
        bad = ~np.isfinite(values)
        if bad.any():
            i = int(np.argmax(bad))
            logger.error(f'{self.name}: non-finite value {values[i]} at {points[i].tolist()}')
            raise OracleFailureError(points[i].copy(), values[i])
        return values


def evaluate_counted(oracle, x):
    """Return f(x) through `oracle`, counting exactly one query."""
    return oracle.evaluate(x)


@dataclass(frozen=True)
class ProblemSpec:
    """
    Smoothness, Hessian-Lipschitz and gradient-norm constants of one objective.

    `domain_radius` bounds the ball around the origin over which `B` (and,
    for polynomial testbed problems, `l` and `rho`) are stated; None means the
    constants hold globally.
    """
    d: int
    l: float
    rho: float
    B: float
    f_star_hint: Optional[float] = None
    domain_radius: Optional[float] = None

    def __post_init__(self):
        if int(self.d) < 1:
            raise InvalidInputError(f'd must be >= 1, got {self.d}')
        for name in ('l', 'rho', 'B'):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise InvalidInputError(f'{name} must be a positive finite number, got {value}')

    def in_domain(self, x):
        if self.domain_radius is None:
            return True
        return float(np.linalg.norm(x)) <= self.domain_radius


class SeededRng:
    """
    The single random stream of a run (numpy PCG64). Same seed, same draws,
    in the same order.
    """

    def __init__(self, seed):
        seed = int(seed)
        if not 0 <= seed < 2 ** 64:
            raise InvalidInputError(f'seed must be an unsigned 64-bit integer, got {seed}')
        self.seed = seed
        self.generator = np.random.Generator(np.random.PCG64(seed))

    def standard_normal(self, shape):
        return self.generator.standard_normal(shape)

    def uniform(self, size=None):
        return self.generator.random(size)

    def __repr__(self):
        return f'SeededRng(seed={self.seed})'


def _check_dimension(d):
    if int(d) < 1:
        raise InvalidInputError(f'dimension must be >= 1, got {d}')
    return int(d)


def sample_standard_gaussian(rng, d):
    """One draw of u ~ N(0, I_d)."""
    return rng.standard_normal(_check_dimension(d))


def sample_gaussian_directions(rng, m, d):
    """m independent N(0, I_d) rows, drawn sequentially from the stream."""
    d = _check_dimension(d)
    if int(m) < 0:
        raise InvalidInputError(f'sample count must be >= 0, got {m}')
    return rng.standard_normal((int(m), d))


def sample_uniform_ball(rng, d, r):
    """
    Uniform draw from the closed d-ball of radius r: a Gaussian direction on
    the unit sphere scaled by r * U^(1/d).
    """
    d = _check_dimension(d)
    if not r >= 0:
        raise InvalidInputError(f'radius must be >= 0, got {r}')
    if r == 0:
        return np.zeros(d)
    direction = rng.standard_normal(d)
    norm = np.linalg.norm(direction)
    while norm == 0.0:
        direction = rng.standard_normal(d)
        norm = np.linalg.norm(direction)
    radius = r * rng.uniform() ** (1.0 / d)
    sample = direction * (radius / norm)
    # rounding in the scale can push the norm a few ulp past r
    length = np.linalg.norm(sample)
    if length > r:
        sample *= r / length
    return sample
