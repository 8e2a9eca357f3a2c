"""Per-step descent check: accurate estimates of a large gradient make f drop."""

import numpy as np

from zoegd.diagnostics.block import TraceBlock
from zoegd.errors import InsufficientTraceError, UnsupportedProblemError


class DescentCheck(TraceBlock):
    """
    For every step taken from x with an estimate g that is accurate
    (||g - grad f(x)|| <= min(eps_hat, g_thres / 4)) and large
    (||g|| >= g_thres), assert

        f(x - eta g) <= f(x) - eta / 4 * ||g||^2

    Steps whose start or end point leaves the problem's domain of interest
    are skipped, so are steps taken with a stale estimate.
    """

    def __init__(self, problem, schedule, rtol=1e-12):
        super().__init__()
        if problem.analytic_gradient is None:
            raise UnsupportedProblemError(f'{problem.name} has no analytic gradient')
        self.problem = problem
        self.schedule = schedule
        self.rtol = rtol
        self.checked = 0

    def process_start(self, result):
        self.checked = 0
        if len(result.trace) > 1 and not any(
                a.has_snapshot and b.has_snapshot and b.t == a.t + 1
                for a, b in zip(result.trace, result.trace[1:])):
            raise InsufficientTraceError('descent check needs snapshots of consecutive iterations')

    def process_step(self, record, next_record):
        if next_record is None or record.f_step is None:
            return
        if not (record.has_snapshot and next_record.has_snapshot):
            return
        spec = self.problem.spec
        if not (spec.in_domain(record.x_step) and spec.in_domain(next_record.x_snapshot)):
            return
        g = record.g_hat
        g_norm = float(np.linalg.norm(g))
        if g_norm < self.schedule.g_thres:
            return
        tolerance = min(self.schedule.eps_hat, self.schedule.g_thres / 4.0)
        if np.linalg.norm(g - self.problem.analytic_gradient(record.x_step)) > tolerance:
            return
        self.checked += 1
        bound = record.f_step - self.schedule.eta / 4.0 * g_norm ** 2
        slack = self.rtol * max(1.0, abs(record.f_step))
        if next_record.f_value > bound + slack:
            self.violation(record.t, f'f went from {record.f_step!r} to {next_record.f_value!r}, '
                                     f'required <= {bound!r}')


def descent_check(result, problem, schedule=None):
    """
    Iterations of `result` violating the accurate-estimate descent
    inequality (expected: none).

    :param result: RunResult with snapshots of consecutive iterations
    :param problem: BenchmarkProblem with an analytic gradient
    :param schedule: defaults to the run's own schedule
    :return: list of iteration indices
    """
    return DescentCheck(problem, schedule or result.schedule).apply_on_run(result)
