"""
Command-line front end.

    python -m zoegd run --problem saddle_quadratic --dim 2 --epsilon 0.01 --seed 7 --budget 16 --eps-hat 1e-3 --no-eps-hat-ceiling --out trace.json --format json
    python -m zoegd tailbound --dim 5 --a2 20 --mc 1000000

Exit codes: 0 on success, 2 on usage or configuration errors (the message
names the offending field), 1 on runtime failures. Estimator-driven commands
refuse to start without --budget when the theoretical sample count is
intractable.
"""

import argparse
import dataclasses
import logging
import math
import sys
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import colorama
import numpy as np
from termcolor import colored

from zoegd.core import SeededRng, as_point
from zoegd.diagnostics import coupling_experiment, escape_experiment, escape_window, scaling_study
from zoegd.diagnostics.escape import default_escape_start
from zoegd.egd import LARGE_SAMPLE_COUNT, EgdConfig, derive_schedule, egd_run
from zoegd.errors import CatalogError, ConfigurationError, InvalidInputError, ZoegdError
from zoegd.estimator import (empirical_tail_probability, estimation_errors, estimator_schedule,
                             exact_tail_probability, gaussian_tail_bound)
from zoegd.testbed import CATALOG, classify_point, make_benchmark
from zoegd.utils.output import FORMATS, write_results

logger = logging.getLogger(__name__)

COMMANDS = ('run', 'estimate', 'escape', 'coupling', 'scaling', 'tailbound')
EGD_COMMANDS = ('run', 'escape', 'scaling')

DEFAULT_PROBLEMS = {
    'run': 'saddle_quadratic',
    'estimate': 'bowl',
    'escape': 'saddle_quadratic',
    'coupling': 'saddle_quadratic',
    'scaling': 'bowl',
}

TRACE_COLUMNS = ('t', 'f', 'g_hat_norm', 'perturbed', 'queries', 'in_domain', 'x')


@dataclass(frozen=True)
class Flag:
    dest: str
    flag: str
    commands: Tuple[str, ...]
    convert: Optional[Callable] = None
    nargs: Optional[str] = None
    help: str = ''

    @property
    def is_switch(self):
        return self.convert is None


ALL = COMMANDS
PROBLEM_COMMANDS = tuple(DEFAULT_PROBLEMS)

FLAGS = (
    Flag('problem', '--problem', PROBLEM_COMMANDS, str, help=f"one of {', '.join(CATALOG)}"),
    Flag('dim', '--dim', ALL, int, help='dimension d'),
    Flag('seed', '--seed', ALL, int, help='seed of the run (first seed of multi-seed experiments)'),
    Flag('seeds', '--seeds', ('escape', 'scaling'), int, help='number of seeds'),
    Flag('out', '--out', ALL, str, help="output path, '-' or omitted for stdout"),
    Flag('fmt', '--format', ALL, str, help=f"{' or '.join(FORMATS)}"),
    Flag('thin', '--thin', ALL, int, help='keep every k-th trace record (the last one is always kept)'),
    Flag('workers', '--workers', ALL, int, help='worker threads (default: $ZOEGD_THREADS or the CPU count)'),
    Flag('epsilon', '--epsilon', EGD_COMMANDS + ('coupling',), float, help='target stationarity'),
    Flag('epsilons', '--epsilons', ('scaling',), float, '+', help='strictly decreasing epsilons'),
    Flag('eps_hat', '--eps-hat', EGD_COMMANDS + ('estimate',), float, help='estimator accuracy'),
    Flag('c', '--c', EGD_COMMANDS + ('coupling',), float, help='step-size constant, < 1/4'),
    Flag('c_prime', '--c-prime', EGD_COMMANDS + ('estimate',), float, help='estimator constant, >= 3'),
    Flag('delta', '--delta', EGD_COMMANDS, float, help='failure probability'),
    Flag('theta', '--theta', EGD_COMMANDS, float, help='free exponent parameter, > 0'),
    Flag('delta_f', '--delta-f', EGD_COMMANDS, float, help='upper bound on f(x0) - f*'),
    Flag('max_iterations', '--max-iterations', EGD_COMMANDS, int, help='iteration cap'),
    Flag('budget', '--budget', EGD_COMMANDS + ('estimate',), int, help='samples per estimate (overrides m)'),
    Flag('x0', '--x0', EGD_COMMANDS + ('estimate',), float, '+', help='start point (query point for estimate)'),
    Flag('exact_gradient', '--exact-gradient', EGD_COMMANDS, help='use the analytic gradient'),
    Flag('stale_gradient', '--stale-gradient', EGD_COMMANDS, help='keep the pre-perturbation estimate'),
    Flag('no_perturbation', '--no-perturbation', EGD_COMMANDS, help='zero perturbations'),
    Flag('chi_form', '--chi-form', EGD_COMMANDS, str, help='quarter (1 + theta/4, default) or full (1 + theta)'),
    Flag('no_eps_hat_ceiling', '--no-eps-hat-ceiling', EGD_COMMANDS, help='keep eps_hat above the ceiling'),
    Flag('trials', '--trials', ('estimate',), int, help='independent estimates'),
    Flag('mu', '--mu', ('coupling',), float, help='offset fraction in (0, 1]'),
    Flag('r', '--r', ('coupling',), float, help='radius of the start ball'),
    Flag('eta', '--eta', ('coupling',), float, help='step size'),
    Flag('steps', '--steps', ('coupling',), int, help='gradient steps'),
    Flag('a2', '--a2', ('tailbound',), float, help='squared-norm threshold'),
    Flag('mc', '--mc', ('tailbound',), int, help='Monte-Carlo draws'),
)


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    problem: Optional[str] = None
    dim: Optional[int] = None
    seed: Optional[int] = None
    seeds: Optional[int] = None
    out: Optional[str] = None
    fmt: Optional[str] = None
    thin: Optional[int] = None
    workers: Optional[int] = None
    epsilon: Optional[float] = None
    epsilons: Optional[Tuple[float, ...]] = None
    eps_hat: Optional[float] = None
    c: Optional[float] = None
    c_prime: Optional[float] = None
    delta: Optional[float] = None
    theta: Optional[float] = None
    delta_f: Optional[float] = None
    max_iterations: Optional[int] = None
    budget: Optional[int] = None
    x0: Optional[Tuple[float, ...]] = None
    exact_gradient: bool = False
    stale_gradient: bool = False
    no_perturbation: bool = False
    chi_form: Optional[str] = None
    no_eps_hat_ceiling: bool = False
    trials: Optional[int] = None
    mu: Optional[float] = None
    r: Optional[float] = None
    eta: Optional[float] = None
    steps: Optional[int] = None
    a2: Optional[float] = None
    mc: Optional[int] = None

    def to_argv(self):
        """Arguments that parse back into this config."""
        argv = [self.command]
        for flag in FLAGS:
            if self.command not in flag.commands:
                continue
            value = getattr(self, flag.dest)
            if flag.is_switch:
                if value:
                    argv.append(flag.flag)
            elif value is not None:
                values = value if flag.nargs else (value,)
                argv.append(flag.flag)
                argv.extend(repr(v) if isinstance(v, float) else str(v) for v in values)
        return argv

    def as_dict(self):
        return dataclasses.asdict(self)


def build_parser():
    parser = argparse.ArgumentParser(prog='zoegd', description='zeroth-order perturbed gradient descent')
    commands = parser.add_subparsers(dest='command', required=True)
    for name in COMMANDS:
        sub = commands.add_parser(name)
        sub.add_argument('-v', '--verbose', action='count', default=0, help='-v for INFO, -vv for DEBUG')
        for flag in FLAGS:
            if name not in flag.commands:
                continue
            if flag.is_switch:
                sub.add_argument(flag.flag, dest=flag.dest, action='store_true', help=flag.help)
            else:
                sub.add_argument(flag.flag, dest=flag.dest, type=flag.convert, nargs=flag.nargs, help=flag.help)
    return parser


def parse_experiment_config(argv):
    """Parse `argv` into an ExperimentConfig; argparse errors raise SystemExit(2)."""
    args = build_parser().parse_args(argv)
    return _config_from_namespace(args)


def _config_from_namespace(args):
    values = {}
    for f in dataclasses.fields(ExperimentConfig):
        value = getattr(args, f.name, None)
        if isinstance(value, list):
            value = tuple(value)
        if value is None and f.default is False:
            value = False
        values[f.name] = value
    return ExperimentConfig(**values)


def _configure_logging(verbosity):
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s', stream=sys.stderr)


def _announce(schedule):
    text = f'effective eps_hat = {schedule.eps_hat:.6g}'
    if schedule.eps_hat_adjusted:
        text += f' (shrunk from {schedule.eps_hat_requested:.6g} to the ceiling)'
        print(colored(text, 'yellow', attrs=['bold']), file=sys.stderr)
    elif not schedule.within_ceiling:
        text += f' (above the ceiling {schedule.eps_hat_ceiling:.6g}; no convergence guarantee)'
        print(colored(text, 'red', attrs=['bold']), file=sys.stderr)
    else:
        print(colored(text, 'green', attrs=['bold']), file=sys.stderr)


def _require_budget(exp, m):
    # the theoretical m is astronomically large at any useful epsilon
    if exp.budget is None and m > LARGE_SAMPLE_COUNT:
        raise ConfigurationError('budget', f'the theoretical sample count m = {m:.3g} per estimate is intractable; '
                                           f'pass --budget (or --exact-gradient)')


def _problem(exp):
    return make_benchmark(exp.problem or DEFAULT_PROBLEMS[exp.command], exp.dim or 2)


def _start(exp, problem):
    if exp.x0 is not None:
        return as_point(exp.x0, problem.d)
    return problem.default_start


def egd_config(exp, problem, x0):
    """The EgdConfig described by the EGD flags of `exp`."""
    if exp.epsilon is None:
        raise ConfigurationError('epsilon', 'is required')
    optional = {}
    for name in ('eps_hat', 'c', 'c_prime', 'delta', 'theta', 'max_iterations', 'chi_form'):
        value = getattr(exp, name)
        if value is not None:
            optional[name] = value
    delta_f = exp.delta_f if exp.delta_f is not None else problem.delta_f(x0)
    return EgdConfig(
        epsilon=exp.epsilon, delta_f=delta_f, sample_budget_override=exp.budget,
        refresh_after_perturbation=not exp.stale_gradient, perturbation=not exp.no_perturbation,
        enforce_eps_hat_ceiling=not exp.no_eps_hat_ceiling, **optional,
    )


def trace_records(result):
    return [{
        't': rec.t,
        'f': rec.f_value,
        'g_hat_norm': rec.g_hat_norm,
        'perturbed': rec.perturbed,
        'queries': rec.queries,
        'in_domain': rec.in_domain,
        'x': rec.x_snapshot,
    } for rec in result.trace]


def cmd_run(exp):
    problem = _problem(exp)
    x0 = _start(exp, problem)
    config = egd_config(exp, problem, x0)
    schedule = derive_schedule(config, problem.spec)
    _announce(schedule)
    if not exp.exact_gradient:
        _require_budget(exp, schedule.estimator.m)
    oracle = problem.fresh_oracle()
    gradient = problem.analytic_gradient if exp.exact_gradient else None
    result = egd_run(oracle, problem.spec, x0, config, SeededRng(exp.seed or 0), gradient=gradient,
                     workers=exp.workers)
    cls = classify_point(problem, result.x_final, config.epsilon, problem.spec.rho)
    summary = result.summary()
    summary.update(classification=cls.as_dict(), oracle_queries=oracle.query_count)
    return trace_records(result), summary, {'egd': config.as_dict(), 'schedule': schedule.as_dict()}, TRACE_COLUMNS


def cmd_estimate(exp):
    problem = _problem(exp)
    x = _start(exp, problem)
    eps_hat = exp.eps_hat if exp.eps_hat is not None else 0.5
    schedule = estimator_schedule(problem.spec, eps_hat, exp.c_prime if exp.c_prime is not None else 3.0)
    _require_budget(exp, schedule.m)
    trials = exp.trials or 100
    errors = estimation_errors(problem, x, schedule, trials, SeededRng(exp.seed or 0), budget_override=exp.budget)
    records = [{'trial': i, 'error': float(e), 'within': bool(e <= eps_hat)} for i, e in enumerate(errors)]
    summary = {
        'trials': trials,
        'accuracy': float(np.mean(errors <= eps_hat)),
        'samples_per_estimate': exp.budget or schedule.m,
        'smoothing_bias_bound': schedule.smoothing_bias_bound,
    }
    return records, summary, {'estimator': schedule.as_dict()}, ('trial', 'error', 'within')


def cmd_escape(exp):
    problem = _problem(exp)
    start = _start(exp, problem) if exp.x0 is not None else default_escape_start(problem)
    config = egd_config(exp, problem, start)
    schedule = derive_schedule(config, problem.spec)
    _announce(schedule)
    if not exp.exact_gradient:
        _require_budget(exp, schedule.estimator.m)
    first = exp.seed or 0
    seeds = range(first, first + (exp.seeds if exp.seeds is not None else 10))
    stats = escape_experiment(problem, config, seeds, x0=start, exact_gradient=exp.exact_gradient,
                              workers=exp.workers)
    records = [run.as_record() for run in stats.runs]
    columns = ('seed', 'termination', 'iterations', 'total_queries', 'f_final', 'class', 'grad_norm', 'min_eig',
               'escaped', 'iterations_to_escape')
    return records, stats.summary(), {'egd': config.as_dict(), 'schedule': schedule.as_dict()}, columns


def cmd_coupling(exp):
    problem = _problem(exp)
    if not problem.known_saddles:
        raise ConfigurationError('problem', f'{problem.name} has no known saddle')
    saddle = problem.known_saddles[0]
    c = exp.c if exp.c is not None else 0.1
    eta = exp.eta if exp.eta is not None else c / problem.spec.l
    gamma = window = None
    config = {}
    if exp.epsilon is not None:
        gamma = math.sqrt(problem.spec.rho * exp.epsilon)
        egd = EgdConfig(epsilon=exp.epsilon, delta_f=problem.delta_f(saddle), c=c)
        schedule = derive_schedule(egd, problem.spec)
        window = escape_window(schedule)
        config = {'egd': egd.as_dict(), 'schedule': schedule.as_dict()}
    series = coupling_experiment(problem, saddle, exp.mu if exp.mu is not None else 1.0,
                                 exp.r if exp.r is not None else 1e-3, eta,
                                 exp.steps if exp.steps is not None else 100,
                                 rng=SeededRng(exp.seed or 0), gamma=gamma, window=window)
    return series.as_records(), series.summary(), config, ('t', 'psi', 'growth_ratio', 'distance')


def cmd_scaling(exp):
    problem = _problem(exp)
    if not exp.epsilons:
        raise ConfigurationError('epsilons', 'is required')
    x0 = _start(exp, problem)
    template = egd_config(dataclasses.replace(exp, epsilon=exp.epsilon or exp.epsilons[0]), problem, x0)
    if not exp.exact_gradient:
        finest = derive_schedule(dataclasses.replace(template, epsilon=min(exp.epsilons)), problem.spec)
        _require_budget(exp, finest.estimator.m)
    first = exp.seed or 0
    seeds = list(range(first, first + (exp.seeds if exp.seeds is not None else 10)))
    table = scaling_study(problem, exp.epsilons, template, seeds, x0=x0, exact_gradient=exp.exact_gradient,
                          workers=exp.workers)
    columns = [f.name for f in dataclasses.fields(type(table.rows[0]))]
    return table.as_records(), table.summary(), {'egd': template.as_dict()}, columns


def cmd_tailbound(exp):
    if exp.dim is None:
        raise ConfigurationError('dim', 'is required')
    if exp.a2 is None:
        raise ConfigurationError('a2', 'is required')
    bound = gaussian_tail_bound(exp.dim, exp.a2)
    row = {'d': exp.dim, 'a2': exp.a2, 'bound': bound, 'exact': exact_tail_probability(exp.dim, exp.a2),
           'empirical': None, 'draws': exp.mc or 0}
    if exp.mc:
        row['empirical'] = empirical_tail_probability(exp.dim, exp.a2, exp.mc, SeededRng(exp.seed or 0))
    empirical = 'n/a' if row['empirical'] is None else f"{row['empirical']:.5f}"
    print(f"analytic bound {bound:.5f}  exact {row['exact']:.5f}  empirical {empirical}", file=sys.stderr)
    return [row], dict(row), {}, tuple(row)


DISPATCH = {
    'run': cmd_run,
    'estimate': cmd_estimate,
    'escape': cmd_escape,
    'coupling': cmd_coupling,
    'scaling': cmd_scaling,
    'tailbound': cmd_tailbound,
}


def dispatch(exp):
    records, summary, config, columns = DISPATCH[exp.command](exp)
    config = dict(config, experiment=exp.as_dict())
    write_results(exp.out, records, fmt=exp.fmt or 'csv', config=config, summary=summary,
                  columns=columns, thin=exp.thin or 1)


def parse_and_dispatch(argv=None):
    """
    Parse `argv`, run the command and write its output.

    :return: the process exit code
    """
    colorama.init()
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if not exc.code else 2
    _configure_logging(args.verbose)
    exp = _config_from_namespace(args)
    if exp.fmt is not None and exp.fmt not in FORMATS:
        print(colored(f"format: must be one of {', '.join(FORMATS)}", 'red'), file=sys.stderr)
        return 2
    try:
        dispatch(exp)
    except (ConfigurationError, CatalogError, InvalidInputError) as err:
        print(colored(f'error: {err}', 'red'), file=sys.stderr)
        return 2
    except (ZoegdError, OSError) as err:
        print(colored(f'failed: {err}', 'red'), file=sys.stderr)
        return 1
    return 0


def main():
    return parse_and_dispatch(sys.argv[1:])
