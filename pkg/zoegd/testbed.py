"""
Benchmark problems with analytic derivatives and declared constants, and the
stationary-point classifier used as the acceptance oracle.

Every catalog function is vectorized over the last axis, so a problem's oracle
evaluates a whole batch of estimator queries in one call. Constants (l, rho, B)
are stated over a domain of interest (a ball around the origin) where a
global statement is impossible; runs that leave it void the guarantees and
are flagged in the trace.
"""

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from zoegd.core import ProblemSpec, ZeroOrderOracle, as_point, sample_uniform_ball
from zoegd.errors import CatalogError, InvalidInputError, UnsupportedProblemError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BenchmarkProblem:
    name: str
    spec: ProblemSpec
    function: Callable
    analytic_gradient: Optional[Callable]
    analytic_hessian: Optional[Callable]
    known_saddles: List[np.ndarray] = field(default_factory=list)
    known_minima: List[np.ndarray] = field(default_factory=list)
    default_start: Optional[np.ndarray] = None
    oracle: ZeroOrderOracle = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'oracle', self.fresh_oracle())

    @property
    def d(self):
        return self.spec.d

    def fresh_oracle(self):
        """An oracle on this problem with its own query counter."""
        return ZeroOrderOracle(self.function, self.spec.d, vectorized=True, name=self.name)

    def value(self, x):
        """f(x) without query accounting (analysis side only)."""
        return float(self.function(np.asarray(x, dtype=np.float64)))

    def analytic_hessian_min_eig(self, x):
        return float(np.linalg.eigvalsh(self._hessian(x))[0])

    def min_eigvec(self, x):
        """Unit eigenvector of the smallest Hessian eigenvalue at `x`."""
        _, vectors = np.linalg.eigh(self._hessian(x))
        return vectors[:, 0]

    def _hessian(self, x):
        if self.analytic_hessian is None:
            raise UnsupportedProblemError(f'{self.name} has no analytic Hessian')
        return np.asarray(self.analytic_hessian(as_point(x, self.d)), dtype=np.float64)

    def delta_f(self, x0, floor=1.0):
        """
        An upper bound on f(x0) - f*: the gap to `f_star_hint`, never below
        `floor` (the schedules need a strictly positive value).
        """
        if self.spec.f_star_hint is None:
            raise UnsupportedProblemError(f'{self.name} has no known minimum value')
        return max(self.value(x0) - self.spec.f_star_hint, floor)

    def sample_domain(self, rng, radius=None):
        radius = radius or self.spec.domain_radius or 5.0
        return sample_uniform_ball(rng, self.d, radius)

    def check_gradient(self, rng, samples=100, h=1e-5):
        """
        Largest relative disagreement between the analytic gradient and
        central differences of the oracle function over `samples` points of
        the domain of interest.
        """
        worst = 0.0
        for _ in range(samples):
            x = self.sample_domain(rng)
            numeric = central_difference_gradient(self.function, x, h)
            exact = self.analytic_gradient(x)
            err = np.linalg.norm(numeric - exact) / max(1.0, np.linalg.norm(exact))
            worst = max(worst, float(err))
        return worst

    def measure_lipschitz(self, rng, pairs=10_000):
        """
        Largest gradient and Hessian difference ratios over `pairs` random
        point pairs inside the domain of interest; both must stay below the
        declared l and rho.
        """
        l_ratio = 0.0
        rho_ratio = 0.0
        for _ in range(pairs):
            x = self.sample_domain(rng)
            y = self.sample_domain(rng)
            gap = np.linalg.norm(x - y)
            if gap == 0.0:
                continue
            l_ratio = max(l_ratio, np.linalg.norm(self.analytic_gradient(x) - self.analytic_gradient(y)) / gap)
            diff = self._hessian(x) - self._hessian(y)
            rho_ratio = max(rho_ratio, np.linalg.norm(diff, 2) / gap)
        return float(l_ratio), float(rho_ratio)


def central_difference_gradient(func, x, h=1e-5):
    """Central-difference gradient of `func` at `x` with step `h`."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    e = np.zeros_like(x)
    for i in range(x.shape[0]):
        e[i] = h
        grad[i] = (float(func(x + e)) - float(func(x - e))) / (2.0 * h)
        e[i] = 0.0
    return grad


class StationaryKind(enum.Enum):
    NOT_STATIONARY = 'NotStationary'
    FIRST_ORDER_ONLY = 'FirstOrderOnly'
    SECOND_ORDER = 'SecondOrder'


@dataclass(frozen=True)
class StationaryClass:
    kind: StationaryKind
    grad_norm: float
    min_eig: float

    def as_dict(self):
        return {'class': self.kind.value, 'grad_norm': self.grad_norm, 'min_eig': self.min_eig}


def classify_point(problem, x, epsilon, rho):
    """
    Classify `x` as NotStationary (||grad f|| > epsilon), FirstOrderOnly
    (small gradient, min eigenvalue below -sqrt(rho * epsilon)) or
    SecondOrder.
    """
    if problem.analytic_gradient is None:
        raise UnsupportedProblemError(f'{problem.name} has no analytic gradient')
    point = as_point(x, problem.d)
    grad_norm = float(np.linalg.norm(problem.analytic_gradient(point)))
    min_eig = problem.analytic_hessian_min_eig(point)
    if grad_norm > epsilon:
        kind = StationaryKind.NOT_STATIONARY
    elif min_eig >= -math.sqrt(rho * epsilon):
        kind = StationaryKind.SECOND_ORDER
    else:
        kind = StationaryKind.FIRST_ORDER_ONLY
    return StationaryClass(kind, grad_norm, min_eig)


# Catalog

CONSTANT_VALUE = 7.0
CLIP_SCALE = 2.0
BOWL_RADIUS = 10.0
QUARTIC_RADIUS = 2.0


def _constant(d):
    def f(x):
        return np.full(np.shape(x)[:-1], CONSTANT_VALUE)

    zero = np.zeros(d)
    return BenchmarkProblem(
        name='constant',
        spec=ProblemSpec(d=d, l=1.0, rho=1.0, B=1.0, f_star_hint=CONSTANT_VALUE),
        function=f,
        analytic_gradient=lambda x: np.zeros(d),
        analytic_hessian=lambda x: np.zeros((d, d)),
        known_minima=[zero],
        default_start=zero,
    )


def _linear_clip(d):
    # s * tanh(a.x / s): linear near the origin, gradient norm never above |a| = 1
    a = np.ones(d) / math.sqrt(d)
    s = CLIP_SCALE

    def f(x):
        return s * np.tanh(np.asarray(x) @ a / s)

    def grad(x):
        return a / np.cosh(x @ a / s) ** 2

    def hess(x):
        z = x @ a / s
        return (-2.0 / s) * np.tanh(z) / np.cosh(z) ** 2 * np.outer(a, a)

    # sup |2 sech^2 tanh| = 4 / (3 sqrt 3) and sup of its derivative is 2
    return BenchmarkProblem(
        name='linear_clip',
        spec=ProblemSpec(d=d, l=0.4, rho=2.0 / s ** 2, B=1.0, f_star_hint=-s),
        function=f,
        analytic_gradient=grad,
        analytic_hessian=hess,
        default_start=np.zeros(d),
    )


def _bowl(d):
    def f(x):
        x = np.asarray(x)
        return 0.5 * np.sum(x * x, axis=-1)

    return BenchmarkProblem(
        name='bowl',
        spec=ProblemSpec(d=d, l=1.0, rho=1.0, B=BOWL_RADIUS, f_star_hint=0.0, domain_radius=BOWL_RADIUS),
        function=f,
        analytic_gradient=lambda x: np.array(x, dtype=np.float64),
        analytic_hessian=lambda x: np.eye(d),
        known_minima=[np.zeros(d)],
        default_start=np.full(d, BOWL_RADIUS / 2),
    )


def _saddle_quadratic(d):
    if d < 2:
        raise InvalidInputError(f'saddle_quadratic needs d >= 2, got {d}')
    signs = np.ones(d)
    signs[1] = -1.0

    def f(x):
        x = np.asarray(x)
        return 0.5 * np.sum(signs * x * x, axis=-1)

    return BenchmarkProblem(
        name='saddle_quadratic',
        spec=ProblemSpec(d=d, l=1.0, rho=1.0, B=BOWL_RADIUS, f_star_hint=-0.5 * BOWL_RADIUS ** 2,
                         domain_radius=BOWL_RADIUS),
        function=f,
        analytic_gradient=lambda x: signs * np.asarray(x, dtype=np.float64),
        analytic_hessian=lambda x: np.diag(signs),
        known_saddles=[np.zeros(d)],
        default_start=np.zeros(d),
    )


def _saddle_quartic(d):
    # 1/4 (x1^2 - 1)^2 + 1/2 sum_{i>=2} x_i^2; constants over the ball of radius 2
    def f(x):
        x = np.asarray(x)
        return 0.25 * (x[..., 0] ** 2 - 1.0) ** 2 + 0.5 * np.sum(x[..., 1:] ** 2, axis=-1)

    def grad(x):
        g = np.array(x, dtype=np.float64)
        g[0] = x[0] ** 3 - x[0]
        return g

    def hess(x):
        h = np.eye(d)
        h[0, 0] = 3.0 * x[0] ** 2 - 1.0
        return h

    minimum = np.zeros(d)
    minimum[0] = 1.0
    return BenchmarkProblem(
        name='saddle_quartic',
        spec=ProblemSpec(d=d, l=3.0 * QUARTIC_RADIUS ** 2 - 1.0, rho=6.0 * QUARTIC_RADIUS, B=6.0,
                         f_star_hint=0.0, domain_radius=QUARTIC_RADIUS),
        function=f,
        analytic_gradient=grad,
        analytic_hessian=hess,
        known_saddles=[np.zeros(d)],
        known_minima=[minimum, -minimum],
        default_start=np.zeros(d),
    )


CATALOG = {
    'constant': _constant,
    'linear_clip': _linear_clip,
    'bowl': _bowl,
    'saddle_quadratic': _saddle_quadratic,
    'saddle_quartic': _saddle_quartic,
}


def make_benchmark(name, d):
    """
    Build the catalog problem `name` in dimension `d`.

    Raises CatalogError listing the valid names for an unknown `name`.
    """
    if name not in CATALOG:
        raise CatalogError(name, CATALOG)
    if int(d) < 1:
        raise InvalidInputError(f'dimension must be >= 1, got {d}')
    return CATALOG[name](int(d))


def quadratic(A, b):
    """f(x) = 1/2 x^T A x + b^T x with its gradient, for estimator checks."""
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)

    def f(x):
        x = np.asarray(x)
        return 0.5 * np.einsum('...i,ij,...j->...', x, A, x) + x @ b

    return f, lambda x: A @ x + b


def linear(g):
    """f(x) = g^T x with its (constant) gradient."""
    g = np.asarray(g, dtype=np.float64)
    return (lambda x: np.asarray(x) @ g), (lambda x: g.copy())
