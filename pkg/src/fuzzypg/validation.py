"""Randomized oracle checks shared by ``fuzzypg validate`` and the test suite."""

from __future__ import annotations

import numpy as np

from .car import learning_problems
from .fuzzy import DEFAULT_GRID, ShapeConfig, boltzmann_policy, build_car_rulebase, gravity_center
from .oracles import (
    OracleReport,
    brute_force_expectation,
    finite_difference_log_policy_gradient,
    grid_argmin_smoothed_energy,
)
from .policy import (
    PolicyParams,
    deterministic_output,
    eligibility_base,
    eligibility_smoothed,
    smoothed_policy,
)

GRADIENT_RTOL = 1e-4
MINIMIZER_RESOLUTION = 1e-4
SUM_TOL = 1e-12
ZERO_MEAN_TOL = 1e-10


def random_case(rng: np.random.Generator):
    """Random car rule base, simplex weights, state, chosen output and previous output."""
    p = learning_problems()[rng.integers(16)]
    rb = build_car_rulebase(p.l1, p.l2, p.leading_speed, ShapeConfig())
    theta = rng.dirichlet(np.ones(20))
    x = (rng.uniform(0.0, 80.0), rng.uniform(0.0, 100.0))
    params = PolicyParams(lam=float(rng.choice([0.0, 0.06, rng.uniform(0, 1)])))
    pi = boltzmann_policy(rb, theta, x, params.T)
    y_prev = float(rng.choice(DEFAULT_GRID))
    return rb, theta, x, pi, y_prev, params


def check_gradients(cases: int, seed: int = 0) -> OracleReport:
    """Both eligibilities against central differences; the chosen output is drawn from the policy."""
    rng = np.random.default_rng(seed)
    report = OracleReport()
    for _ in range(cases):
        rb, theta, x, pi, y_prev, params = random_case(rng)
        y_t = float(DEFAULT_GRID[rng.choice(101, p=pi)])
        report.add(eligibility_base(rb, theta, x, y_t, params.T),
                   finite_difference_log_policy_gradient(rb, theta, x, y_t, y_prev, params, DEFAULT_GRID, "pi"))
        pi_prime = smoothed_policy(gravity_center(pi), y_prev, params)
        y_s = float(DEFAULT_GRID[rng.choice(101, p=pi_prime)])
        report.add(eligibility_smoothed(rb, theta, x, y_s, y_prev, params),
                   finite_difference_log_policy_gradient(rb, theta, x, y_s, y_prev, params, DEFAULT_GRID,
                                                         "pi_prime"))
    return report


def check_minimizer(cases: int, seed: int = 0) -> tuple[OracleReport, bool]:
    """Closed-form output against exhaustive search; also checks the lambda = 0 identity."""
    rng = np.random.default_rng(seed)
    report = OracleReport()
    identity = True
    for _ in range(cases):
        y_g, y_prev, lam = rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(0, 2)
        report.add(deterministic_output(y_g, y_prev, lam),
                   grid_argmin_smoothed_energy(y_g, y_prev, lam, MINIMIZER_RESOLUTION))
        identity &= deterministic_output(y_g, y_prev, 0.0) == y_g
    return report, identity


def check_distributions(cases: int, seed: int = 0) -> tuple[float, float]:
    """Largest deviation of a distribution's mass from 1 and of an eligibility mean from 0."""
    rng = np.random.default_rng(seed)
    worst_sum = worst_mean = 0.0
    for _ in range(cases):
        rb, theta, x, pi, y_prev, params = random_case(rng)
        pi_prime = smoothed_policy(gravity_center(pi), y_prev, params)
        worst_sum = max(worst_sum, abs(pi.sum() - 1), abs(pi_prime.sum() - 1))
        base = np.stack([eligibility_base(rb, theta, x, y, params.T) for y in DEFAULT_GRID])
        smooth = np.stack([eligibility_smoothed(rb, theta, x, y, y_prev, params) for y in DEFAULT_GRID])
        for elig, probs in ((base, pi), (smooth, pi_prime)):
            for i in range(elig.shape[1]):
                mean = brute_force_expectation(lambda y, col=elig[:, i]: col[int(round((y + 5) * 10))],
                                               probs, DEFAULT_GRID)
                worst_mean = max(worst_mean, abs(mean))
    return worst_sum, worst_mean


def run_validation(cases: int = 100, seed: int = 0):
    """Yield ``(name, report, passed)`` for each oracle family."""
    grad = check_gradients(cases, seed)
    yield "eligibility vs finite differences", grad, grad.max_rel_error <= GRADIENT_RTOL
    mini, identity = check_minimizer(cases, seed)
    yield ("closed-form minimizer vs exhaustive search", f"{mini}, lambda=0 identity {identity}",
           mini.max_abs_error <= MINIMIZER_RESOLUTION and identity)
    n = max(1, cases // 10)
    worst_sum, worst_mean = check_distributions(n, seed)
    yield ("distribution mass and zero-mean eligibility",
           f"{n} cases, max |sum-1| {worst_sum:.3g}, max |mean| {worst_mean:.3g}",
           worst_sum <= SUM_TOL and worst_mean <= ZERO_MEAN_TOL)
