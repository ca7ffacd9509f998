"""Policy-gradient learning of rule weights.

Two stochastic policies are supported. The base policy samples outputs from
the Boltzmann distribution of the rule energy. The smoothed policy samples
from a Boltzmann distribution of

    E'(y) = 1/2 (y - y_G)^2 + lam (y - y_prev)^2

where ``y_G`` is the gravity center of the base policy, which pulls outputs
toward the defuzzified value and away from abrupt changes.

The ``*_kernel`` functions work on precomputed arrays and broadcast over
leading (batch) axes; the rule-base level functions wrap them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fuzzy import (
    DEFAULT_GRID,
    RuleBase,
    boltzmann,
    energies_over_grid,
    gravity_center,
)


@dataclass(frozen=True)
class PolicyParams:
    T: float = 0.04
    T_prime: float = 0.04
    lam: float = 0.0

    def __post_init__(self):
        if not (self.T > 0 and self.T_prime > 0):
            raise ValueError("temperatures must be positive")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")


@dataclass(frozen=True)
class LearnParams:
    epsilon: float = 0.0075
    epsilon_prime: float = 0.0003
    max_learning_iterations: int = 200

    def __post_init__(self):
        if not (self.epsilon > 0 and self.epsilon_prime > 0 and self.max_learning_iterations > 0):
            raise ValueError("learning parameters must be positive")


def uniform_weights(n_rules: int = 20) -> np.ndarray:
    return np.full(n_rules, 1.0 / n_rules)


def normalize_weights(theta_raw) -> np.ndarray:
    """Project onto the simplex by clipping at zero and rescaling.

    Works row-wise on 2-D input. Rows whose clipped sum is zero become
    uniform.
    """
    theta = np.clip(np.asarray(theta_raw, dtype=float), 0.0, None)
    total = theta.sum(axis=-1, keepdims=True)
    uniform = np.full_like(theta, 1.0 / theta.shape[-1])
    safe = np.where(total > 0, total, 1.0)
    return np.where(total > 0, theta / safe, uniform)


def update_weights(theta, trace, r, rate: float) -> np.ndarray:
    """``theta + rate * r * trace``, then renormalized.

    ``r`` may be a scalar or one reward per row of a 2-D ``theta``.
    """
    theta = np.asarray(theta, dtype=float)
    r = np.asarray(r, dtype=float)
    if r.ndim:
        r = r[..., None]
    return normalize_weights(theta + rate * r * np.asarray(trace, dtype=float))


# --- smoothed objective ----------------------------------------------------

def smoothed_energy(y, y_G, y_prev, lam: float):
    return 0.5 * (y - y_G) ** 2 + lam * (y - y_prev) ** 2


def deterministic_output(y_G, y_prev, lam: float):
    """Exact minimizer of the smoothed energy over the reals."""
    return (y_G + 2.0 * lam * y_prev) / (1.0 + 2.0 * lam)


def smoothed_policy_kernel(y_G, y_prev, lam: float, T_prime: float, grid=DEFAULT_GRID) -> np.ndarray:
    y_G = np.asarray(y_G, dtype=float)[..., None]
    y_prev = np.asarray(y_prev, dtype=float)[..., None]
    return boltzmann(smoothed_energy(grid, y_G, y_prev, lam), T_prime)


def smoothed_policy(y_G: float, y_prev: float, params: PolicyParams, grid=DEFAULT_GRID) -> np.ndarray:
    return smoothed_policy_kernel(y_G, y_prev, params.lam, params.T_prime, grid)


# --- characteristic eligibilities -------------------------------------------

def base_eligibility_kernel(antecedents, consequents, pi, chosen, T: float) -> np.ndarray:
    """d ln pi(y_t) / d theta_i for the base policy.

    ``antecedents`` is ``(..., n)``, ``consequents`` ``(n, G)``, ``pi``
    ``(..., G)`` and ``chosen`` the integer grid index of ``y_t``.
    """
    expected_b = (pi[..., None, :] * consequents).sum(axis=-1)
    chosen_b = np.moveaxis(consequents[:, chosen], 0, -1)
    return antecedents * (chosen_b - expected_b) / T


def smoothed_eligibility_kernel(antecedents, consequents, pi, pi_prime, y_t,
                                T: float, T_prime: float, grid=DEFAULT_GRID) -> np.ndarray:
    """d ln pi'(y_t) / d theta_i for the smoothed policy.

    The derivative flows only through ``y_G``; ``y_prev`` is a past sample
    and is held fixed.
    """
    y_G = gravity_center(pi, grid)
    centred = pi * (grid - y_G[..., None])
    # d y_G / d theta_i = A^i <(y - y_G) B^i>_pi / T
    dyg = antecedents * (centred[..., None, :] * consequents).sum(axis=-1) / T
    mean_prime = gravity_center(pi_prime, grid)
    return dyg * ((np.asarray(y_t) - mean_prime)[..., None] / T_prime)


def _policy_arrays(rb: RuleBase, theta, x, T: float, grid):
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (len(rb),):
        raise ValueError(f"theta has shape {theta.shape}, rule base has {len(rb)} rules")
    a = rb.antecedent_vector(x)
    b = rb.consequent_matrix(grid)
    pi = boltzmann(energies_over_grid(a, theta, b), T)
    return a, b, pi


def _grid_index(grid, y_t) -> int:
    idx = int(np.argmin(np.abs(grid - y_t)))
    if not np.isclose(grid[idx], y_t, rtol=0, atol=1e-9):
        raise ValueError(f"chosen output {y_t} is not on the output grid")
    return idx


def eligibility_base(rb: RuleBase, theta, x, y_t: float, T: float, grid=DEFAULT_GRID) -> np.ndarray:
    a, b, pi = _policy_arrays(rb, theta, x, T, grid)
    return base_eligibility_kernel(a, b, pi, _grid_index(grid, y_t), T)


def eligibility_smoothed(rb: RuleBase, theta, x, y_t: float, y_prev: float,
                         params: PolicyParams, grid=DEFAULT_GRID) -> np.ndarray:
    a, b, pi = _policy_arrays(rb, theta, x, params.T, grid)
    _grid_index(grid, y_t)
    pi_prime = smoothed_policy_kernel(gravity_center(pi, grid), y_prev, params.lam, params.T_prime, grid)
    return smoothed_eligibility_kernel(a, b, pi, pi_prime, y_t, params.T, params.T_prime, grid)


# --- sampling ---------------------------------------------------------------

def sample_index(probs: np.ndarray, u) -> np.ndarray:
    """Inverse-CDF sampling: grid index for uniform draw(s) ``u`` in [0, 1).

    The draw is scaled by the CDF total so rounding can never select a
    trailing point with zero mass.
    """
    cdf = np.cumsum(probs, axis=-1)
    return (cdf <= np.asarray(u)[..., None] * cdf[..., -1:]).sum(axis=-1)


def sample_action(probs: np.ndarray, grid: np.ndarray, rng: np.random.Generator) -> float:
    return float(grid[sample_index(probs, rng.random())])


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator used for every experiment stream."""
    return np.random.Generator(np.random.Philox(seed))
