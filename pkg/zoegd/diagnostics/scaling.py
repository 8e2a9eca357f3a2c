"""
Iteration and query counts against the target accuracy: EGD is run over a
decreasing sequence of epsilons and the medians are tabulated next to the
iteration bound and the formula-predicted query counts.
"""

import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from zoegd.core import SeededRng
from zoegd.egd import derive_schedule, egd_run
from zoegd.errors import InvalidInputError
from zoegd.utils.workers import worker_count

logger = logging.getLogger(__name__)


@dataclass
class ScalingRow:
    epsilon: float
    median_iterations: float
    median_queries: float
    normalized: float
    predicted_iterations: float
    predicted_queries: float
    growth: Optional[float]
    chi: float
    accounting_ok: bool

    def as_record(self):
        return dataclasses.asdict(self)


@dataclass
class ScalingTable:
    rows: List[ScalingRow]

    @property
    def growth_factors(self):
        return [row.growth for row in self.rows[1:]]

    def as_records(self):
        return [row.as_record() for row in self.rows]

    def summary(self):
        growth = self.growth_factors
        return {'rows': len(self.rows), 'max_growth': max(growth) if growth else None}


def _check_epsilons(epsilons):
    epsilons = [float(e) for e in epsilons]
    if not epsilons:
        raise InvalidInputError('at least one epsilon is required')
    for eps in epsilons:
        if not 0.0 < eps < 1.0:
            raise InvalidInputError(f'epsilon must lie in (0, 1), got {eps}')
    for a, b in zip(epsilons, epsilons[1:]):
        if not b < a:
            raise InvalidInputError(f'epsilons must be strictly decreasing, got {a} then {b}')
    return epsilons


def scaling_study(problem, epsilons, config, seeds, x0=None, exact_gradient=False, workers=None):
    """
    Median iterations and queries to termination for each epsilon.

    `config` is a template: its epsilon is replaced per row. `seeds` is a
    seed count (seeds 0 .. n-1) or an explicit list. The `normalized` column
    is median_iterations * epsilon^2 / chi^4, flat when the counts follow the
    iteration bound; `growth` is the ratio of consecutive medians.
    """
    epsilons = _check_epsilons(epsilons)
    seed_list = list(range(int(seeds))) if isinstance(seeds, int) else sorted(int(s) for s in seeds)
    if not seed_list:
        raise InvalidInputError('at least one seed is required')
    start = problem.default_start if x0 is None else np.asarray(x0, dtype=np.float64)
    gradient = problem.analytic_gradient if exact_gradient else None

    rows = []
    previous = None
    for eps in epsilons:
        cfg = dataclasses.replace(config, epsilon=eps)
        schedule = derive_schedule(cfg, problem.spec)

        def one(seed):
            oracle = problem.fresh_oracle()
            result = egd_run(oracle, problem.spec, start, cfg, SeededRng(seed), gradient=gradient, workers=1)
            return result.iterations, result.total_queries, result.total_queries == oracle.query_count

        with ThreadPoolExecutor(max_workers=min(worker_count(workers), len(seed_list))) as pool:
            outcomes = list(pool.map(one, seed_list))

        iterations = float(np.median([o[0] for o in outcomes]))
        queries = float(np.median([o[1] for o in outcomes]))
        rows.append(ScalingRow(
            epsilon=eps,
            median_iterations=iterations,
            median_queries=queries,
            normalized=iterations * eps ** 2 / schedule.chi ** 4,
            predicted_iterations=schedule.iteration_bound,
            predicted_queries=schedule.predicted_queries,
            growth=iterations / previous if previous else None,
            chi=schedule.chi,
            accounting_ok=all(o[2] for o in outcomes),
        ))
        logger.info(f'{problem.name}: epsilon={eps:g} median iterations {iterations:g}')
        previous = iterations
    return ScalingTable(rows)
