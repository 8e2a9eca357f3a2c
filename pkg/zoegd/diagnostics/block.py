"""
Post-hoc checks over a run trace.

A check subclasses TraceBlock and overrides only the hooks it needs.
`apply_on_run` walks the trace once, handing every record (with its
successor, None for the last one) to `process_step`, and returns the
collected violations.
"""

import logging

from zoegd.egd import Termination

logger = logging.getLogger(__name__)


class TraceBlock:
    def __init__(self):
        self.violations = []

    def process_start(self, result):
        pass

    def process_step(self, record, next_record):
        pass

    def process_end(self, result):
        pass

    def violation(self, t, message):
        logger.debug(f'{type(self).__name__}: t={t}: {message}')
        self.violations.append(t)

    def apply_on_run(self, result):
        self.violations = []
        self.process_start(result)
        trace = result.trace
        for i, record in enumerate(trace):
            following = trace[i + 1] if i + 1 < len(trace) else None
            self.process_step(record, following)
        self.process_end(result)
        if self.violations:
            logger.info(f'{type(self).__name__}: {len(self.violations)} violation(s)')
        return list(self.violations)


class PerturbationSpacing(TraceBlock):
    """Consecutive perturbations are at least t_thres iterations apart."""

    def process_start(self, result):
        self.t_thres = result.schedule.t_thres
        self.last = None

    def process_step(self, record, next_record):
        if not record.perturbed:
            return
        if self.last is not None and record.t - self.last <= self.t_thres:
            self.violation(record.t, f'perturbed {record.t - self.last} iterations after the previous one')
        self.last = record.t


class MonotoneDecrease(TraceBlock):
    """
    Outside perturbation steps, f never increases between iterations. Only
    meaningful on exact-gradient runs with eta <= 1/l.
    """

    def __init__(self, atol=0.0):
        super().__init__()
        self.atol = atol

    def process_step(self, record, next_record):
        if next_record is None or record.perturbed or next_record.t != record.t + 1:
            return
        if next_record.f_value > record.f_value + self.atol:
            self.violation(record.t, f'f rose from {record.f_value!r} to {next_record.f_value!r}')


class ReturnPointCheck(TraceBlock):
    """
    On a terminal-condition return, the returned point is the iterate
    recorded exactly t_thres iterations before the last one, that iterate was
    perturbed, and the decrease since then stayed short of f_thres.
    """

    def process_end(self, result):
        if result.termination is not Termination.TERMINAL_CONDITION_MET:
            return
        schedule = result.schedule
        last = result.trace[-1]
        index = result.returned_index
        if index != last.t - schedule.t_thres:
            self.violation(last.t, f'returned index {index} is not t - t_thres = {last.t - schedule.t_thres}')
            return
        returned = next((r for r in result.trace if r.t == index), None)
        if returned is None or not returned.perturbed:
            self.violation(last.t, f'iteration {index} was not a perturbation step')
            return
        if not last.f_value - returned.f_value > -schedule.f_thres:
            self.violation(last.t, 'function dropped by f_thres but the run terminated')
        if result.f_final != returned.f_value:
            self.violation(last.t, 'returned value does not match the recorded one')
