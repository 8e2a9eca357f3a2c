"""
Coupled gradient-descent sequences near a strict saddle.

Two exact-gradient GD runs start from u0 (uniform in the ball of radius r
around the saddle) and w0 = u0 + mu * r * e1, with e1 the eigenvector of the
most negative Hessian eigenvalue. Their separation along e1, psi_t, grows at
least geometrically, by 1 + gamma * eta / 2 per step, while both stay close
to the saddle.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from zoegd.core import SeededRng, as_point, sample_uniform_ball
from zoegd.errors import InvalidInputError, UnsupportedProblemError

logger = logging.getLogger(__name__)


@dataclass
class CouplingSeries:
    psi: List[float]
    gamma_eta: float
    growth_ratios: List[float]
    distances: List[float] = field(default_factory=list)
    window: Optional[float] = None
    eta: float = 0.0
    mu: float = 0.0
    r: float = 0.0

    @property
    def growth_floor(self):
        return 1.0 + self.gamma_eta / 2.0

    def ratios_within_window(self):
        """Growth ratios of the steps that end with both sequences inside the window."""
        if self.window is None:
            return list(self.growth_ratios)
        return [ratio for ratio, dist in zip(self.growth_ratios, self.distances[1:]) if dist <= self.window]

    def shortfalls(self):
        """Steps inside the window whose growth ratio falls below 1 + gamma * eta / 2."""
        floor = self.growth_floor
        out = []
        for t, (ratio, dist) in enumerate(zip(self.growth_ratios, self.distances[1:])):
            if self.window is not None and dist > self.window:
                continue
            if not ratio >= floor:
                out.append(t)
        return out

    def as_records(self):
        rows = []
        for t, psi in enumerate(self.psi):
            rows.append({
                't': t,
                'psi': psi,
                'growth_ratio': self.growth_ratios[t - 1] if t > 0 else None,
                'distance': self.distances[t],
            })
        return rows

    def summary(self):
        return {
            'gamma_eta': self.gamma_eta,
            'growth_floor': self.growth_floor,
            'window': self.window,
            'eta': self.eta,
            'mu': self.mu,
            'r': self.r,
            'shortfalls': len(self.shortfalls()),
        }


def escape_window(schedule):
    """Radius 100 * P * c_hat around the saddle inside which the growth bound holds."""
    return 100.0 * schedule.script_P * schedule.c_hat


def coupling_experiment(problem, saddle, mu, r, eta, steps, rng=None, gamma=None, window=None):
    """
    Run the two coupled sequences for `steps` exact gradient steps.

    Parameters
    ----------
    problem : BenchmarkProblem
        needs an analytic gradient and Hessian
    saddle : array-like
    mu : float
        offset fraction in (0, 1]
    r : float
        radius of the ball u0 is drawn from
    eta : float
        step size
    steps : int
    rng : SeededRng, optional
        defaults to seed 0
    gamma : float, optional
        curvature scale in the growth floor; defaults to |lambda_min| at the
        saddle
    window : float, optional
        only steps ending within this distance of the saddle are held to the
        growth floor (see `escape_window`)

    Returns
    -------
    CouplingSeries
        psi of length steps + 1
    """
    if problem.analytic_gradient is None or problem.analytic_hessian is None:
        raise UnsupportedProblemError(f'{problem.name} lacks analytic derivatives')
    if not 0.0 < mu <= 1.0:
        raise InvalidInputError(f'mu must lie in (0, 1], got {mu}')
    if not r > 0.0:
        raise InvalidInputError(f'r must be > 0, got {r}')
    if not eta > 0.0:
        raise InvalidInputError(f'eta must be > 0, got {eta}')
    if int(steps) < 0:
        raise InvalidInputError(f'steps must be >= 0, got {steps}')

    center = as_point(saddle, problem.d)
    rng = rng or SeededRng(0)
    e1 = problem.min_eigvec(center)
    if gamma is None:
        gamma = abs(problem.analytic_hessian_min_eig(center))
    grad = problem.analytic_gradient

    u = center + sample_uniform_ball(rng, problem.d, r)
    w = u + mu * r * e1

    def separation(a, b):
        return abs(float(np.dot(b - a, e1)))

    def distance(a, b):
        return max(float(np.linalg.norm(a - center)), float(np.linalg.norm(b - center)))

    psi = [separation(u, w)]
    distances = [distance(u, w)]
    ratios = []
    for _ in range(int(steps)):
        u = u - eta * grad(u)
        w = w - eta * grad(w)
        psi.append(separation(u, w))
        distances.append(distance(u, w))
        ratios.append(psi[-1] / psi[-2] if psi[-2] > 0.0 else math.nan)

    series = CouplingSeries(psi=psi, gamma_eta=gamma * eta, growth_ratios=ratios, distances=distances,
                            window=window, eta=eta, mu=mu, r=r)
    logger.info(f'{problem.name}: psi {psi[0]:g} -> {psi[-1]:g} over {steps} steps')
    return series
