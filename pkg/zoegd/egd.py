"""
Perturbed Estimated Gradient Descent.

Plain gradient descent on estimated gradients, with a uniform-ball
perturbation whenever the estimate is small and no perturbation happened in
the last t_thres iterations. If the function has not dropped by f_thres
t_thres iterations after a perturbation, the pre-perturbation point is
returned: it is an epsilon-second-order stationary point with high
probability.

`derive_schedule` turns the user parameters (EgdConfig) into every derived
quantity of the loop (EgdSchedule); `egd_run` executes the loop.
"""

import collections
import dataclasses
import enum
import functools
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import optimize

from zoegd.core import as_point, sample_uniform_ball
from zoegd.errors import ConfigurationError, OracleFailureError, OutOfRangeError
from zoegd.estimator import DEFAULT_C_PRIME, EstimatorSchedule, estimate_gradient, estimator_schedule

logger = logging.getLogger(__name__)

CHI_FORMS = ('quarter', 'full')

# theoretical sample counts above this are impractical without a budget override
LARGE_SAMPLE_COUNT = 10 ** 7


@functools.lru_cache(maxsize=None)
def solve_chi1(theta, theta_divisor=4.0):
    """
    Smallest chi1 >= 1 such that chi^3 * exp(-chi) <= exp(-chi / (1 + theta/divisor))
    holds for every chi >= chi1.

    Taking logs, the inequality reads g(chi) = 3 ln(chi) - k chi <= 0 with
    k = 1 - 1 / (1 + theta/divisor). g is concave with its maximum at 3/k, so
    either it never becomes positive (chi1 = 1) or chi1 is its larger root,
    bracketed and bisected to 1e-9.

    :param theta: the free exponent parameter, > 0
    :param theta_divisor: 4 for the 'quarter' form of chi, 1 for the 'full'
        one
    :return: float
    """
    if not theta > 0:
        raise ConfigurationError('theta', f'must be > 0, got {theta}')
    ratio = theta / theta_divisor
    k = ratio / (1.0 + ratio)

    def g(chi):
        return 3.0 * math.log(chi) - k * chi

    peak = 3.0 / k
    if g(peak) <= 0.0:
        return 1.0
    hi = 2.0 * peak
    while g(hi) > 0.0:
        hi *= 2.0
    root = optimize.bisect(g, peak, hi, xtol=1e-9)
    while g(root) > 0.0:
        root += 1e-9
    return max(1.0, root)


@functools.lru_cache(maxsize=None)
def solve_c_hat():
    """Smallest c_hat > 3 with 8 * (2 + ln(400 c_hat)) <= c_hat (about 100.8)."""
    root = optimize.brentq(lambda x: 8.0 * (2.0 + math.log(400.0 * x)) - x, 3.0, 1e4, xtol=1e-12)
    while 8.0 * (2.0 + math.log(400.0 * root)) > root:
        root = np.nextafter(root, np.inf)
    return float(root)


@dataclass(frozen=True)
class EgdConfig:
    """
    User parameters of one EGD run.

    epsilon, delta_f
        target stationarity and an upper bound on f(x0) - f*.
    eps_hat
        estimator accuracy; None picks the largest value the guarantees allow.
    c, c_prime, delta, theta
        step-size constant (< 1/4), estimator constant (>= 3), failure
        probability and the free exponent parameter.
    max_iterations, sample_budget_override
        hard cap on iterations (None: twice the iteration bound) and a sample
        count replacing the theoretical m.
    chi_form
        'quarter' scales the log by 1 + theta/4, 'full' by 1 + theta.
    refresh_after_perturbation
        re-estimate the gradient at the perturbed point (False keeps the
        stale estimate from before the perturbation).
    perturbation
        False draws a zero perturbation, leaving estimation noise alone to
        move the iterate off a saddle.
    enforce_eps_hat_ceiling
        shrink eps_hat to the ceiling; False keeps a larger user value with a
        warning.
    snapshot_every
        keep the iterate in the trace every k iterations (the final one is
        always kept).
    """
    epsilon: float
    delta_f: float
    eps_hat: Optional[float] = None
    c: float = 0.1
    c_prime: float = DEFAULT_C_PRIME
    delta: float = 0.1
    theta: float = 4.0
    max_iterations: Optional[int] = None
    sample_budget_override: Optional[int] = None
    chi_form: str = 'quarter'
    refresh_after_perturbation: bool = True
    perturbation: bool = True
    enforce_eps_hat_ceiling: bool = True
    snapshot_every: int = 1

    def __post_init__(self):
        def positive(name):
            value = getattr(self, name)
            if value is None or not (math.isfinite(value) and value > 0):
                raise ConfigurationError(name, f'must be a positive finite number, got {value}')

        for name in ('epsilon', 'delta_f', 'theta'):
            positive(name)
        if self.eps_hat is not None and not 0.0 < self.eps_hat < 1.0:
            raise ConfigurationError('eps_hat', f'must lie in (0, 1), got {self.eps_hat}')
        if not 0.0 < self.c < 0.25:
            raise ConfigurationError('c', f'must lie in (0, 1/4), got {self.c}')
        if not self.c_prime >= 3.0:
            raise ConfigurationError('c_prime', f'must be >= 3, got {self.c_prime}')
        if not 0.0 < self.delta < 1.0:
            raise ConfigurationError('delta', f'must lie in (0, 1), got {self.delta}')
        for name in ('max_iterations', 'sample_budget_override'):
            value = getattr(self, name)
            if value is not None and int(value) < 1:
                raise ConfigurationError(name, f'must be >= 1, got {value}')
        if self.chi_form not in CHI_FORMS:
            raise ConfigurationError('chi_form', f"must be one of {', '.join(CHI_FORMS)}, got {self.chi_form!r}")
        if int(self.snapshot_every) < 1:
            raise ConfigurationError('snapshot_every', f'must be >= 1, got {self.snapshot_every}')

    def as_dict(self):
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class EgdSchedule:
    chi: float
    chi1: float
    chi_alternate: float
    eta: float
    g_thres: float
    f_thres: float
    t_thres: int
    r: float
    gamma: float
    script_T: float
    script_P: float
    delta_hat: float
    c_hat: float
    eps_hat: float
    eps_hat_requested: Optional[float]
    eps_hat_ceiling: float
    eps_hat_ceiling_linear: float
    eps_hat_ceiling_cube: float
    eps_hat_adjusted: bool
    iteration_bound: float
    max_iterations: int
    predicted_queries: float
    estimator: EstimatorSchedule

    @property
    def within_ceiling(self):
        return self.eps_hat <= self.eps_hat_ceiling

    def as_dict(self):
        out = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name != 'estimator'}
        out.update(self.estimator.as_dict())
        out['eps_hat'] = self.eps_hat
        return out


def _chi(config, spec, form):
    divisor = 4.0 if form == 'quarter' else 1.0
    log_arg = 2.0 * spec.d * spec.l * config.delta_f / (config.c * config.epsilon ** 2 * config.delta)
    return max((1.0 + config.theta / divisor) * math.log(log_arg), solve_chi1(config.theta, divisor))


def derive_schedule(config, spec):
    """
    Every derived quantity of the loop for `config` on a problem with
    constants `spec`.

    Parameters
    ----------
    config : EgdConfig
    spec : ProblemSpec

    Returns
    -------
    EgdSchedule

    Raises ConfigurationError naming the field whose derived value is
    non-finite or non-positive.
    """
    eps, c, l, rho, d = config.epsilon, config.c, spec.l, spec.rho, spec.d
    divisor = 4.0 if config.chi_form == 'quarter' else 1.0
    chi1 = solve_chi1(config.theta, divisor)
    chi = _chi(config, spec, config.chi_form)
    other = 'full' if config.chi_form == 'quarter' else 'quarter'
    chi_alternate = _chi(config, spec, other)

    eta = c / l
    g_thres = math.sqrt(c) / chi ** 2 * eps
    f_thres = c / chi ** 3 * math.sqrt(eps ** 3 / rho)
    gamma = math.sqrt(rho * eps)
    t_thres = math.ceil(chi / c ** 2 * l / gamma)
    r = g_thres / l
    delta_hat = d * l / gamma * math.exp(-chi)
    c_hat = solve_c_hat()

    ceiling_linear = math.sqrt(c) / (4.0 * chi ** 2) * eps
    ceiling_cube = ((2.0 - math.sqrt(2.0)) / 2.0 * (c * math.sqrt(eps ** 3 * rho) / (chi ** 3 * l))
                    * (delta_hat / (2.0 * math.sqrt(d))) * (300.0 * c_hat + 1.0))
    ceiling = min(ceiling_linear, ceiling_cube)

    requested = config.eps_hat
    eps_hat = ceiling if requested is None else requested
    adjusted = False
    if requested is not None and requested > ceiling:
        if config.enforce_eps_hat_ceiling:
            logger.warning(f'eps_hat {requested:g} exceeds the ceiling {ceiling:g}; shrinking to the ceiling')
            eps_hat = ceiling
            adjusted = True
        else:
            logger.warning(f'eps_hat {requested:g} exceeds the ceiling {ceiling:g}; '
                           f'keeping it, the convergence guarantee does not apply')
    if not (math.isfinite(eps_hat) and 0.0 < eps_hat < 1.0):
        raise ConfigurationError('eps_hat', f'effective value {eps_hat!r} is outside (0, 1)')

    try:
        estimator = estimator_schedule(spec, eps_hat, config.c_prime)
    except OutOfRangeError as err:
        raise ConfigurationError('eps_hat', str(err)) from err
    if not estimator.v > 0.0:
        raise ConfigurationError('eps_hat', f'smoothing radius underflows for eps_hat={eps_hat:g}')

    iteration_bound = chi ** 4 / c ** 3 * l * config.delta_f / eps ** 2
    if config.max_iterations is not None:
        max_iterations = int(config.max_iterations)
    else:
        max_iterations = math.ceil(2.0 * iteration_bound)
    predicted_queries = iteration_bound * (estimator.m + 1)

    derived = {'chi': chi, 'eta': eta, 'g_thres': g_thres, 'f_thres': f_thres, 't_thres': t_thres,
               'r': r, 'gamma': gamma, 'delta_hat': delta_hat, 'iteration_bound': iteration_bound}
    for name, value in derived.items():
        if not (math.isfinite(value) and value > 0):
            raise ConfigurationError(name, f'derived value {value!r} is not a positive finite number')

    return EgdSchedule(
        chi=chi, chi1=chi1, chi_alternate=chi_alternate, eta=eta, g_thres=g_thres, f_thres=f_thres,
        t_thres=int(t_thres), r=r, gamma=gamma, script_T=chi / (eta * gamma),
        script_P=math.sqrt(c) / chi * math.sqrt(eps / rho), delta_hat=delta_hat, c_hat=c_hat,
        eps_hat=eps_hat, eps_hat_requested=requested, eps_hat_ceiling=ceiling,
        eps_hat_ceiling_linear=ceiling_linear, eps_hat_ceiling_cube=ceiling_cube,
        eps_hat_adjusted=adjusted, iteration_bound=iteration_bound, max_iterations=max_iterations,
        predicted_queries=predicted_queries, estimator=estimator,
    )


def descent_step(x, g_hat, eta):
    """x - eta * g_hat"""
    x = np.asarray(x, dtype=np.float64)
    g_hat = np.asarray(g_hat, dtype=np.float64)
    if x.shape != g_hat.shape:
        raise ConfigurationError('g_hat', f'shape {g_hat.shape} does not match the point {x.shape}')
    return x - eta * g_hat


class Termination(enum.Enum):
    TERMINAL_CONDITION_MET = 'TerminalConditionMet'
    MAX_ITERATIONS_EXCEEDED = 'MaxIterationsExceeded'


@dataclass
class IterationRecord:
    """
    One loop iteration. `f_value` and `x_snapshot` belong to the iterate
    before any perturbation; `x_step`/`f_step` to the point the descent step
    starts from (the perturbed one when `perturbed`). Vectors are only kept
    on snapshot iterations.
    """
    t: int
    f_value: float
    g_hat_norm: float
    perturbed: bool
    queries: int
    f_step: Optional[float]
    in_domain: bool = True
    x_snapshot: Optional[np.ndarray] = None
    x_step: Optional[np.ndarray] = None
    g_hat: Optional[np.ndarray] = None

    @property
    def has_snapshot(self):
        return self.x_snapshot is not None


@dataclass
class RunResult:
    x_final: np.ndarray
    f_final: float
    termination: Optional[Termination]
    iterations: int
    perturbation_events: List[int]
    total_queries: int
    trace: List[IterationRecord]
    schedule: EgdSchedule
    seed: Optional[int] = None
    domain_exits: int = 0
    returned_index: Optional[int] = None
    exact_gradient: bool = False

    def summary(self):
        return {
            'termination': self.termination.value if self.termination else None,
            'iterations': self.iterations,
            'total_queries': self.total_queries,
            'f_final': self.f_final,
            'x_final': self.x_final.tolist(),
            'returned_index': self.returned_index,
            'perturbation_events': list(self.perturbation_events),
            'domain_exits': self.domain_exits,
            'seed': self.seed,
        }


@dataclass
class _LoopState:
    trace: List[IterationRecord] = field(default_factory=list)
    events: List[int] = field(default_factory=list)
    queries: int = 0
    domain_exits: int = 0
    best_x: Optional[np.ndarray] = None
    best_f: float = math.inf
    best_t: Optional[int] = None


def egd_run(oracle, spec, x0, config, rng, gradient=None, workers=None):
    """
    Run perturbed Estimated Gradient Descent from `x0`.

    Parameters
    ----------
    oracle : ZeroOrderOracle
        exclusively owned by this run for its duration
    spec : ProblemSpec
    x0 : array-like
    config : EgdConfig
    rng : SeededRng
        the run's only random stream (estimator directions and perturbations)
    gradient : callable, optional
        analytic gradient replacing the estimator; f(x_t) is still queried
        through the oracle
    workers : int, optional
        thread count for the estimator's query fan-out

    Returns
    -------
    RunResult

    An OracleFailureError propagates with `partial_result` set to the run up
    to the failing iteration.
    """
    schedule = derive_schedule(config, spec)
    x = as_point(x0, spec.d)
    estimator = schedule.estimator
    budget = config.sample_budget_override
    if gradient is None and budget is None and estimator.m > LARGE_SAMPLE_COUNT:
        logger.warning(f'theoretical sample count m = {estimator.m} per iteration; '
                       f'consider a sample budget override')
    snapshot_every = int(config.snapshot_every)
    t_thres = schedule.t_thres

    def estimate(point):
        if gradient is not None:
            fx = oracle.evaluate(point)
            return np.asarray(gradient(point), dtype=np.float64), fx, 1
        est = estimate_gradient(oracle, point, estimator, rng, budget_override=budget, workers=workers)
        return est.g_hat, est.base_value, est.queries_used

    queries_at_start = oracle.query_count
    state = _LoopState()
    # pre-perturbation (x, f) of the last t_thres + 1 iterations
    window = collections.deque(maxlen=t_thres + 1)
    t_temp = -t_thres - 1

    def result(x_final, f_final, termination, returned_index):
        if state.trace and not state.trace[-1].has_snapshot:
            last = state.trace[-1]
            last.x_snapshot, last.x_step, last.g_hat = window[-1][0].copy(), last_step.copy(), last_g.copy()
        return RunResult(
            x_final=np.array(x_final, dtype=np.float64), f_final=float(f_final), termination=termination,
            iterations=len(state.trace), perturbation_events=state.events, total_queries=state.queries,
            trace=state.trace, schedule=schedule, seed=rng.seed, domain_exits=state.domain_exits,
            returned_index=returned_index, exact_gradient=gradient is not None,
        )

    last_step = x
    last_g = np.zeros(spec.d)
    try:
        for t in range(schedule.max_iterations):
            g_hat, fx, queries = estimate(x)
            x_pre, f_pre = x, fx
            in_domain = spec.in_domain(x_pre)
            if not in_domain:
                if state.domain_exits == 0:
                    logger.warning(f'iterate left the domain of interest at t={t}; guarantees no longer apply')
                state.domain_exits += 1

            perturbed = False
            if np.linalg.norm(g_hat) <= schedule.g_thres and t - t_temp > t_thres:
                if config.perturbation:
                    xi = sample_uniform_ball(rng, spec.d, schedule.r)
                else:
                    xi = np.zeros(spec.d)
                x = x + xi
                t_temp = t
                perturbed = True
                state.events.append(t)
                logger.debug(f't={t}: perturbed, f={f_pre!r}')
                if config.refresh_after_perturbation:
                    g_hat, fx, extra = estimate(x)
                    queries += extra
                else:
                    fx = None

            state.queries += queries
            window.append((x_pre, f_pre))
            if f_pre < state.best_f:
                state.best_x, state.best_f, state.best_t = x_pre, f_pre, t

            record = IterationRecord(t=t, f_value=f_pre, g_hat_norm=float(np.linalg.norm(g_hat)),
                                     perturbed=perturbed, queries=queries, f_step=fx, in_domain=in_domain)
            if t % snapshot_every == 0:
                record.x_snapshot, record.x_step, record.g_hat = x_pre.copy(), x.copy(), g_hat.copy()
            state.trace.append(record)
            last_step, last_g = x, g_hat

            if t - t_temp == t_thres:
                x_back, f_back = window[0]
                if f_pre - f_back > -schedule.f_thres:
                    logger.info(f'terminal condition met at t={t}; returning the iterate of t={t - t_thres}')
                    return result(x_back, f_back, Termination.TERMINAL_CONDITION_MET, t - t_thres)

            x = descent_step(x, g_hat, schedule.eta)
    except OracleFailureError as err:
        logger.error(f'oracle failure after {len(state.trace)} iterations')
        # include what the failing iteration already spent
        state.queries = oracle.query_count - queries_at_start
        if state.best_x is not None:
            err.partial_result = result(state.best_x, state.best_f, None, state.best_t)
        else:
            err.partial_result = result(x, math.nan, None, None)
        raise

    logger.info(f'no termination within {schedule.max_iterations} iterations; returning the best iterate '
                f'(t={state.best_t})')
    return result(state.best_x, state.best_f, Termination.MAX_ITERATIONS_EXCEEDED, state.best_t)
