"""Reference computations used to check the analytic code paths.

Nothing here calls the energy, softmax, gravity-center or eligibility code
in ``fuzzy``/``policy``; only membership degrees are shared. The arithmetic
is written out separately so a bug in the main path cannot hide in both
places at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .fuzzy import RuleBase, membership_eval


class NumericalDomainError(ArithmeticError):
    pass


@dataclass
class OracleReport:
    max_abs_error: float = 0.0
    max_rel_error: float = 0.0
    cases_checked: int = 0

    def add(self, got, want, abs_floor: float = 1e-8) -> None:
        got = np.atleast_1d(np.asarray(got, dtype=float))
        want = np.atleast_1d(np.asarray(want, dtype=float))
        err = np.abs(got - want)
        rel = err / np.maximum(np.abs(want), abs_floor)
        self.max_abs_error = max(self.max_abs_error, float(err.max(initial=0.0)))
        self.max_rel_error = max(self.max_rel_error, float(rel.max(initial=0.0)))
        self.cases_checked += 1

    def __str__(self) -> str:
        return (f"{self.cases_checked} cases, max abs err {self.max_abs_error:.3g}, "
                f"max rel err {self.max_rel_error:.3g}")


def _truth_tables(rb: RuleBase, x: Sequence[float], grid: np.ndarray):
    a = np.ones(len(rb.rules))
    for i, rule in enumerate(rb.rules):
        for mf, xj in zip(rule.antecedents, x):
            a[i] *= float(membership_eval(mf, float(xj)))
    b = np.stack([membership_eval(rule.consequents[0], grid) for rule in rb.rules])
    return a, b


def _log_softmax(v: np.ndarray) -> np.ndarray:
    top = v.max(axis=-1, keepdims=True)
    return v - (top + np.log(np.exp(v - top).sum(axis=-1, keepdims=True)))


def _log_policy(thetas, a, b, grid, T, T_prime, lam, y_prev, which) -> np.ndarray:
    """Log-probabilities over the grid for each row of ``thetas``."""
    support = a[:, None] * b  # (n_rules, G)
    energies = -np.einsum("ki,ig->kg", thetas, support)
    log_pi = _log_softmax(-energies / T)
    if which == "pi":
        return log_pi
    y_g = np.einsum("kg,g->k", np.exp(log_pi), grid)
    e_prime = 0.5 * (grid - y_g[:, None]) ** 2 + lam * (grid - y_prev) ** 2
    return _log_softmax(-e_prime / T_prime)


def finite_difference_log_policy_gradient(rb: RuleBase, theta, x, y_t: float, y_prev: float,
                                          params, grid, which: str = "pi",
                                          delta: float = 1e-6) -> np.ndarray:
    """Central differences of ``ln pi(y_t)`` or ``ln pi'(y_t)`` in each weight.

    The whole pipeline is recomputed at ``theta +/- delta e_i`` with no
    renormalization of the perturbed weights. All perturbations are
    evaluated together as rows of one array.
    """
    if which not in ("pi", "pi_prime"):
        raise ValueError(f"which must be 'pi' or 'pi_prime', got {which!r}")
    if not 0 < delta <= 1e-3:
        raise ValueError("delta must lie in (0, 1e-3]")
    grid = np.asarray(grid, dtype=float)
    h_t = int(np.argmin(np.abs(grid - y_t)))
    a, b = _truth_tables(rb, x, grid)
    theta = np.asarray(theta, dtype=float)
    n = len(theta)
    step = delta * np.eye(n)
    thetas = np.concatenate([theta[None], theta + step, theta - step])
    log_p = _log_policy(thetas, a, b, grid, params.T, params.T_prime, params.lam, y_prev, which)[:, h_t]
    if log_p[0] < math.log(1e-300):
        raise NumericalDomainError(f"probability of y_t={y_t} underflows")
    return (log_p[1:n + 1] - log_p[n + 1:]) / (2 * delta)


def brute_force_expectation(f: Callable[[float], float], probs, grid) -> float:
    total = 0.0
    for y, p in zip(grid, probs):
        total += float(f(float(y))) * float(p)
    return total


def grid_argmin_smoothed_energy(y_G: float, y_prev: float, lam: float,
                                resolution: float = 1e-4, lo: float = -5.0, hi: float = 5.0) -> float:
    """Exhaustive minimizer of the smoothed energy on a fine grid over [lo, hi]."""
    if resolution > 1e-3:
        raise ValueError("resolution must be at most 1e-3")
    n = int(round((hi - lo) / resolution))
    ys = lo + resolution * np.arange(n + 1)
    vals = 0.5 * (ys - y_G) ** 2 + lam * (ys - y_prev) ** 2
    return float(ys[int(np.argmin(vals))])
