"""
Monte-Carlo saddle escape: many seeded EGD runs from one start point, with
the returned points classified against the analytic derivatives.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from zoegd.core import SeededRng
from zoegd.egd import RunResult, derive_schedule, egd_run
from zoegd.testbed import StationaryClass, StationaryKind, classify_point
from zoegd.utils.workers import worker_count

logger = logging.getLogger(__name__)


@dataclass
class EscapeRun:
    seed: int
    result: RunResult
    classification: StationaryClass
    escaped: bool
    iterations_to_escape: Optional[int]

    def as_record(self):
        return {
            'seed': self.seed,
            'termination': self.result.termination.value,
            'iterations': self.result.iterations,
            'total_queries': self.result.total_queries,
            'f_final': self.result.f_final,
            'class': self.classification.kind.value,
            'grad_norm': self.classification.grad_norm,
            'min_eig': self.classification.min_eig,
            'escaped': self.escaped,
            'iterations_to_escape': self.iterations_to_escape,
        }


@dataclass
class EscapeStats:
    seeds: int
    escaped: int
    mean_iterations_to_escape: Optional[float]
    classifications: List[StationaryClass] = field(default_factory=list)
    runs: List[EscapeRun] = field(default_factory=list)
    delta_hat: Optional[float] = None
    f_thres: Optional[float] = None
    f_start: Optional[float] = None

    @property
    def escape_rate(self):
        if self.seeds == 0:
            return None
        return self.escaped / self.seeds

    def summary(self):
        return {
            'seeds': self.seeds,
            'escaped': self.escaped,
            'escape_rate': self.escape_rate,
            'mean_iterations_to_escape': self.mean_iterations_to_escape,
            'delta_hat': self.delta_hat,
            'f_thres': self.f_thres,
            'f_start': self.f_start,
        }


def default_escape_start(problem):
    if problem.known_saddles:
        return problem.known_saddles[0]
    if problem.known_minima:
        return problem.known_minima[0]
    return problem.default_start


def escape_experiment(problem, config, seeds, x0=None, exact_gradient=False, workers=None):
    """
    Run EGD once per seed from `x0` (the problem's first saddle by default,
    its first minimum when it has none).

    A run escaped when its returned point classifies as second-order
    stationary or its value dropped to f(x0) - f_thres or below. The
    iteration of escape is the first one whose value reached that level,
    or the run length for runs that only terminated at a second-order point.

    :param problem: a testbed problem
    :param config: EGD parameters shared by every seed
    :param seeds: iterable of integer seeds
    :param x0: start point
    :param exact_gradient: inject the analytic gradient instead of estimating
    :param workers: number of runs executed concurrently
    :return: EscapeStats, runs ordered by seed
    """
    seeds = sorted(int(s) for s in seeds)
    start = np.array(default_escape_start(problem) if x0 is None else x0, dtype=np.float64)
    schedule = derive_schedule(config, problem.spec)
    f_start = problem.value(start)
    level = f_start - schedule.f_thres
    gradient = problem.analytic_gradient if exact_gradient else None

    def one(seed):
        result = egd_run(problem.fresh_oracle(), problem.spec, start, config, SeededRng(seed),
                         gradient=gradient, workers=1)
        cls = classify_point(problem, result.x_final, config.epsilon, problem.spec.rho)
        first_drop = next((r.t for r in result.trace if r.f_value <= level), None)
        escaped = cls.kind is StationaryKind.SECOND_ORDER or result.f_final <= level
        if not escaped:
            when = None
        elif first_drop is not None:
            when = first_drop
        else:
            when = result.iterations
        logger.debug(f'seed {seed}: {cls.kind.value}, escaped={escaped}')
        return EscapeRun(seed, result, cls, escaped, when)

    if not seeds:
        runs = []
    else:
        with ThreadPoolExecutor(max_workers=min(worker_count(workers), len(seeds))) as pool:
            runs = list(pool.map(one, seeds))

    escaped = [run for run in runs if run.escaped]
    mean_iterations = float(np.mean([run.iterations_to_escape for run in escaped])) if escaped else None
    stats = EscapeStats(
        seeds=len(runs), escaped=len(escaped), mean_iterations_to_escape=mean_iterations,
        classifications=[run.classification for run in runs], runs=runs,
        delta_hat=schedule.delta_hat, f_thres=schedule.f_thres, f_start=f_start,
    )
    logger.info(f'{problem.name}: {stats.escaped}/{stats.seeds} runs escaped (delta_hat={schedule.delta_hat:g})')
    return stats
