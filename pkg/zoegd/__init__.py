from zoegd.core import ProblemSpec, SeededRng, ZeroOrderOracle, evaluate_counted
from zoegd.estimator import EstimatorSchedule, estimate_gradient, estimator_schedule, gaussian_tail_bound
from zoegd.egd import EgdConfig, EgdSchedule, RunResult, Termination, derive_schedule, egd_run
from zoegd.testbed import BenchmarkProblem, classify_point, make_benchmark
