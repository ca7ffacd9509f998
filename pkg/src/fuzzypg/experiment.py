"""Learning and evaluation experiments for the car speed-control task.

Experiments are run as batches: each row of a batch is an independent
experiment with its own weight vector and random stream, and all per-row
arithmetic is row-local, so the result of an experiment does not depend on
which other experiments share its batch.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np

from . import car
from .car import EPISODE_LENGTH, GOAL_DEADLINE, MAX_DISTANCE, KMH_PER_MPS, Outcome, Problem, RewardConfig
from .fuzzy import (
    DEFAULT_GRID,
    DEFAULT_SHAPE,
    ShapeConfig,
    build_car_rulebase,
)
from .policy import (
    LearnParams,
    PolicyParams,
    deterministic_output,
    make_rng,
    sample_index,
    smoothed_policy_kernel,
    uniform_weights,
    update_weights,
)

log = logging.getLogger(__name__)

METHODS = ("i", "ii", "iii")
REWARDS = ("r1", "r2")
METHOD_LAMBDA = {"i": 0.0, "ii": 0.0, "iii": 0.06}
N_RULES = 20


@dataclass(frozen=True)
class MethodConfig:
    """One learning method and reward pairing with all its parameters.

    Method ``i`` learns with the base policy and is evaluated with the
    gravity center; ``ii`` and ``iii`` learn with the smoothed policy and
    are evaluated with its minimizer, differing only in ``policy.lam``.
    """

    method: str = "i"
    reward_variant: str = "r1"
    policy: PolicyParams = PolicyParams()
    learn: LearnParams = LearnParams()
    reward_cfg: RewardConfig = RewardConfig()
    shape: ShapeConfig = DEFAULT_SHAPE

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.reward_variant not in REWARDS:
            raise ValueError(f"reward must be one of {REWARDS}, got {self.reward_variant!r}")

    @classmethod
    def create(cls, method: str, reward_variant: str, **overrides) -> "MethodConfig":
        """Config with the method's default smoothing strength.

        ``overrides`` may hold ``T``, ``T_prime``, ``lam``, ``epsilon``,
        ``epsilon_prime``, ``max_learning_iterations``, ``c`` or ``shape``.
        """
        policy = PolicyParams(
            T=overrides.pop("T", 0.04),
            T_prime=overrides.pop("T_prime", 0.04),
            lam=overrides.pop("lam", METHOD_LAMBDA.get(method, 0.0)),
        )
        learn = LearnParams(
            epsilon=overrides.pop("epsilon", 0.0075),
            epsilon_prime=overrides.pop("epsilon_prime", 0.0003),
            max_learning_iterations=overrides.pop("max_learning_iterations", 200),
        )
        reward_cfg = RewardConfig(c=overrides.pop("c", -0.01))
        shape = overrides.pop("shape", DEFAULT_SHAPE)
        if overrides:
            raise TypeError(f"unknown overrides: {sorted(overrides)}")
        return cls(method, reward_variant, policy, learn, reward_cfg, shape)

    @property
    def smoothed(self) -> bool:
        return self.method != "i"

    @property
    def rate(self) -> float:
        return self.learn.epsilon_prime if self.smoothed else self.learn.epsilon

    @cached_property
    def consequents(self) -> np.ndarray:
        # the consequent shapes do not depend on the problem
        return build_car_rulebase(1.0, 2.0, 0.0, self.shape).consequent_matrix(DEFAULT_GRID)


@dataclass
class ExperimentResult:
    seed: int
    method: str
    reward_variant: str
    final_theta: np.ndarray
    m_c: int
    solved_all: bool
    smooth: bool
    t_in: list[Optional[int]]


@dataclass
class EvaluationResult:
    """Per-problem evaluation of one weight vector."""

    passed: np.ndarray
    smooth: np.ndarray
    t_in: np.ndarray  # -1 where the goal was not met

    @property
    def passed_all(self) -> bool:
        return bool(self.passed.all())

    @property
    def smooth_all(self) -> bool:
        return bool(self.passed_all and self.smooth.all())


@dataclass
class SolutionStats:
    method: str = ""
    reward_variant: str = ""
    repetitions: int = 0
    seed_min: Optional[int] = None
    seed_max: Optional[int] = None
    n_S: int = 0
    n_Sc: int = 0
    n_Sp: int = 0
    n_Spc: int = 0
    mean_mc_Sc: float = float("nan")
    mean_mc_S: float = float("nan")
    mean_tin_c: float = float("nan")
    mean_tin_prime_c: float = float("nan")
    evaluated: bool = False

    @property
    def ratio_Spc_Sc(self) -> float:
        return self.n_Spc / self.n_Sc if self.n_Sc else float("nan")


# --- batched rollouts ---------------------------------------------------------

@dataclass
class Rollout:
    """Batch of episodes; state arrays are NaN after an episode terminates."""

    distance: np.ndarray  # (B, L+1)
    speed: np.ndarray  # (B, L+1)
    outputs: np.ndarray  # (B, L)
    steps: np.ndarray  # (B,) control steps taken
    collided: np.ndarray
    too_far: np.ndarray
    eligibility: Optional[np.ndarray] = None  # (B, n_rules)


def _problem_arrays(problems: Sequence[Problem]):
    return tuple(np.array([getattr(p, f) for p in problems], dtype=float)
                 for f in ("leading_speed", "following_speed_init", "distance_init", "l1", "l2"))


class CarKernel:
    """Policy arithmetic specialized to the car rule base.

    Its 20 rules are 4 antecedent groups ({long, short} x {fast, slow})
    times the same 5 consequent shapes, so energies and expectations only
    need the 5 distinct shapes. Results agree with the generic kernels in
    ``fuzzy``/``policy`` to rounding.
    """

    n_groups = 4

    def __init__(self, cfg: MethodConfig):
        cons = cfg.consequents.reshape(self.n_groups, -1, DEFAULT_GRID.size)
        if not (cons == cons[0]).all():
            raise ValueError("consequents differ between antecedent groups")
        self.shapes = cons[0]  # (5, G)
        self.shapes_t = np.ascontiguousarray(self.shapes.T)  # (G, 5)
        self.shape_cfg = cfg.shape
        self.T = cfg.policy.T
        self.grid = DEFAULT_GRID

    def groups(self, distance, speed, l1, l2, lead) -> np.ndarray:
        sc = self.shape_cfg
        lo, hi = l1 - sc.distance_margin, l2 + sc.distance_margin
        short = np.clip((hi - distance) / (hi - lo), 0.0, 1.0)
        slow = np.clip((lead + sc.speed_margin - speed) / (2 * sc.speed_margin), 0.0, 1.0)
        g = np.empty(distance.shape + (self.n_groups,))
        g[..., 0] = (1.0 - short) * (1.0 - slow)
        g[..., 1] = (1.0 - short) * slow
        g[..., 2] = short * (1.0 - slow)
        g[..., 3] = short * slow
        return g

    def policy(self, groups, theta) -> np.ndarray:
        support = (theta.reshape(-1, self.n_groups, self.shapes.shape[0]) * groups[:, :, None]).sum(axis=1)
        e = -(support[:, :, None] * self.shapes).sum(axis=1)
        e -= e.min(axis=-1, keepdims=True)
        p = np.exp(e / -self.T)
        p /= p.sum(axis=-1, keepdims=True)
        return p

    def base_eligibility(self, groups, pi, chosen) -> np.ndarray:
        expected = (pi[:, None, :] * self.shapes).sum(axis=-1)
        diff = (self.shapes_t[chosen] - expected) / self.T
        return (groups[:, :, None] * diff[:, None, :]).reshape(len(pi), -1)

    def gravity_slope(self, groups, pi, y_g) -> np.ndarray:
        """d y_G / d theta_i for every rule."""
        centred = pi * (self.grid - y_g[:, None])
        cov = (centred[:, None, :] * self.shapes).sum(axis=-1) / self.T
        return (groups[:, :, None] * cov[:, None, :]).reshape(len(pi), -1)


def _same_problem(problems: Sequence[Problem]) -> bool:
    return all(p is problems[0] or p == problems[0] for p in problems)


def rollout(cfg: MethodConfig, theta: np.ndarray, problems: Sequence[Problem],
            uniforms: Optional[np.ndarray] = None, y_prev0: float = 0.0) -> Rollout:
    """Run one episode per row of ``theta`` on the matching problem.

    With ``uniforms`` (shape ``(B, L)``) the stochastic learning policy is
    used and eligibilities are accumulated; without it the deterministic
    evaluation output is applied.
    """
    theta = np.atleast_2d(theta)
    n = theta.shape[0]
    if len(problems) != n:
        raise ValueError(f"{n} weight rows but {len(problems)} problems")
    kernel = CarKernel(cfg)
    grid = DEFAULT_GRID
    pp = cfg.policy
    learning = uniforms is not None
    shared = _same_problem(problems)
    if shared:
        p0 = problems[0]
        lead, l1, l2 = float(p0.leading_speed), float(p0.l1), float(p0.l2)
        v0, d0 = float(p0.following_speed_init), float(p0.distance_init)
    else:
        lead, v0, d0, l1, l2 = _problem_arrays(problems)

    distance = np.full((n, EPISODE_LENGTH + 1), np.nan)
    speed = np.full((n, EPISODE_LENGTH + 1), np.nan)
    outputs = np.full((n, EPISODE_LENGTH), np.nan)
    distance[:, 0] = d0
    speed[:, 0] = v0
    steps = np.zeros(n, dtype=int)
    collided = np.zeros(n, dtype=bool)
    too_far = np.zeros(n, dtype=bool)
    elig = np.zeros_like(theta) if learning else None

    live = np.arange(n)
    th = theta
    d = distance[:, 0].copy()
    v = speed[:, 0].copy()
    y_prev = np.full(n, float(y_prev0))
    ld, a1, a2 = lead, l1, l2
    acc = np.zeros_like(theta) if learning else None

    for t in range(EPISODE_LENGTH):
        g = kernel.groups(d, v, a1, a2, ld)
        pi = kernel.policy(g, th)
        y_g = (pi * grid).sum(axis=-1)
        if learning:
            u = uniforms[live, t]
            if cfg.smoothed:
                pi_prime = smoothed_policy_kernel(y_g, y_prev, pp.lam, pp.T_prime, grid)
                y = grid[sample_index(pi_prime, u)]
                acc += kernel.gravity_slope(g, pi, y_g) * ((y - (pi_prime * grid).sum(axis=-1)) / pp.T_prime)[:, None]
            else:
                h = sample_index(pi, u)
                y = grid[h]
                acc += kernel.base_eligibility(g, pi, h)
        elif cfg.smoothed:
            y = deterministic_output(y_g, y_prev, pp.lam)
        else:
            y = y_g
        outputs[live, t] = y
        v = np.maximum(0.0, v + 2.0 * y)
        d = d + (ld - v) / KMH_PER_MPS
        speed[live, t + 1] = v
        distance[live, t + 1] = d
        stop = (d < 0) | (d >= MAX_DISTANCE)
        if stop.any():
            gone = live[stop]
            collided[gone] = d[stop] < 0
            too_far[gone] = d[stop] >= MAX_DISTANCE
            steps[gone] = t + 1
            if learning:
                elig[gone] = acc[stop]
            keep = ~stop
            live, th, d, v, y_prev = live[keep], th[keep], d[keep], v[keep], y[keep]
            if learning:
                acc = acc[keep]
            if not shared:
                ld, a1, a2 = ld[keep], a1[keep], a2[keep]
            if live.size == 0:
                break
        else:
            y_prev = y
    steps[live] = EPISODE_LENGTH
    if learning:
        elig[live] = acc

    return Rollout(distance, speed, outputs, steps, collided, too_far, elig)


def entry_times(r: Rollout, problems: Sequence[Problem]) -> np.ndarray:
    """Start of the final uninterrupted in-range run, -1 if none (vectorized)."""
    _, _, _, l1, l2 = _problem_arrays(problems)
    inside = (r.distance >= l1[:, None]) & (r.distance <= l2[:, None])
    suffix = np.logical_and.accumulate(inside[:, ::-1], axis=1)[:, ::-1]
    t_in = np.argmax(suffix, axis=1)
    return np.where(suffix[:, -1], t_in, -1)


def outcomes(r: Rollout, problems: Sequence[Problem]) -> list[Outcome]:
    out = []
    t_in = entry_times(r, problems)
    for k in range(len(problems)):
        s = r.steps[k]
        if r.collided[k]:
            out.append(Outcome(car.COLLISION, x1=float(r.distance[k, s])))
        elif r.too_far[k]:
            out.append(Outcome(car.TOO_FAR, t_far=int(s)))
        elif t_in[k] < 0:
            out.append(Outcome(car.NEVER_ENTERED, x1=float(r.distance[k, -1])))
        elif t_in[k] <= GOAL_DEADLINE:
            out.append(Outcome(car.SUCCESS, t_in=int(t_in[k])))
        else:
            out.append(Outcome(car.LATE_SUCCESS, t_in=int(t_in[k])))
    return out


def smooth_flags(r: Rollout, problems: Sequence[Problem], tol: float = 0.1) -> np.ndarray:
    lead = _problem_arrays(problems)[0]
    final_acc = np.abs(r.speed[:, -1] - r.speed[:, -2])
    mismatch = np.abs(r.speed[:, -1] - lead)
    # NaN rows (terminated episodes) compare False
    return (final_acc < tol) & (mismatch < tol)


def rollout_to_trace(r: Rollout, k: int, problem: Problem, outcome: Outcome) -> car.EpisodeTrace:
    s = r.steps[k]
    states = [car.CarState(t, float(r.distance[k, t]), float(r.speed[k, t])) for t in range(s + 1)]
    return car.EpisodeTrace(problem, states, [float(y) for y in r.outputs[k, :s]], outcome)


# --- single-episode entry points -------------------------------------------------

def run_learning_episode(cfg: MethodConfig, problem: Problem, theta, rng: np.random.Generator,
                         y_prev0: float = 0.0):
    """One stochastic episode; returns the trace and the summed eligibilities."""
    u = rng.random((1, EPISODE_LENGTH))
    r = rollout(cfg, np.asarray(theta, dtype=float)[None], [problem], u, y_prev0)
    return rollout_to_trace(r, 0, problem, outcomes(r, [problem])[0]), r.eligibility[0]


def run_evaluation_episode(cfg: MethodConfig, problem: Problem, theta) -> car.EpisodeTrace:
    r = rollout(cfg, np.asarray(theta, dtype=float)[None], [problem])
    return rollout_to_trace(r, 0, problem, outcomes(r, [problem])[0])


# --- learning experiments ------------------------------------------------------------

RewardFn = Callable[[Outcome, Problem], float]


def run_experiments(cfg: MethodConfig, seeds: Sequence[int],
                    problems: Optional[Sequence[Problem]] = None,
                    reward_fn: Optional[RewardFn] = None,
                    initial_theta: Optional[np.ndarray] = None) -> list[ExperimentResult]:
    """Run one learning experiment per seed, batched.

    Each iteration learns once on every training problem in order, updating
    the weights after each episode, then evaluates all training problems
    deterministically. An experiment stops when all problems are solved or
    the iteration cap is reached.
    """
    problems = list(problems) if problems is not None else car.learning_problems()
    if reward_fn is None:
        def reward_fn(o, p):
            return car.reward(o, cfg.reward_variant, cfg.reward_cfg, p.l1, p.l2)
    seeds = [int(s) for s in seeds]
    n = len(seeds)
    rngs = [make_rng(s) for s in seeds]
    start = uniform_weights(N_RULES) if initial_theta is None else np.asarray(initial_theta, float)
    theta = np.tile(start, (n, 1))
    m_c = np.zeros(n, dtype=int)
    solved = np.zeros(n, dtype=bool)
    smooth = np.zeros(n, dtype=bool)
    t_in = np.full((n, len(problems)), -1)
    active = np.arange(n)

    for it in range(1, cfg.learn.max_learning_iterations + 1):
        if active.size == 0:
            break
        draws = np.stack([rngs[k].random((len(problems), EPISODE_LENGTH)) for k in active])
        th = theta[active]
        for j, p in enumerate(problems):
            batch = [p] * active.size
            r = rollout(cfg, th, batch, draws[:, j])
            rewards = np.array([reward_fn(o, p) for o in outcomes(r, batch)])
            th = update_weights(th, r.eligibility, rewards, cfg.rate)
        theta[active] = th
        m_c[active] = it

        ok = np.ones(active.size, dtype=bool)
        sm = np.ones(active.size, dtype=bool)
        tin = np.empty((active.size, len(problems)), dtype=int)
        for j, p in enumerate(problems):
            batch = [p] * active.size
            r = rollout(cfg, th, batch)
            tin[:, j] = entry_times(r, batch)
            good = ~(r.collided | r.too_far) & (tin[:, j] >= 0) & (tin[:, j] <= GOAL_DEADLINE)
            ok &= good
            sm &= smooth_flags(r, batch)
        done = active[ok]
        solved[done] = True
        smooth[done] = sm[ok]
        t_in[done] = tin[ok]
        active = active[~ok]
        log.debug("iteration %d: %d experiments still learning", it, active.size)

    return [
        ExperimentResult(
            seed=seeds[k], method=cfg.method, reward_variant=cfg.reward_variant,
            final_theta=theta[k].copy(), m_c=int(m_c[k]), solved_all=bool(solved[k]),
            smooth=bool(smooth[k]),
            t_in=[int(v) if v >= 0 else None for v in t_in[k]],
        )
        for k in range(n)
    ]


def learning_experiment(cfg: MethodConfig, seed: int, **kwargs) -> ExperimentResult:
    return run_experiments(cfg, [seed], **kwargs)[0]


# --- evaluation on the test problems --------------------------------------------------

def evaluate_weights(cfg: MethodConfig, thetas, problems: Optional[Sequence[Problem]] = None,
                     chunk_rows: int = 20000) -> list[EvaluationResult]:
    """Deterministic evaluation of each weight vector on every problem."""
    problems = list(problems) if problems is not None else car.evaluation_problems()
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    n_p = len(problems)
    per_chunk = max(1, chunk_rows // n_p)
    results = []
    for lo in range(0, thetas.shape[0], per_chunk):
        block = thetas[lo:lo + per_chunk]
        rows = np.repeat(block, n_p, axis=0)
        batch = problems * block.shape[0]
        r = rollout(cfg, rows, batch)
        tin = entry_times(r, batch)
        passed = ~(r.collided | r.too_far) & (tin >= 0) & (tin <= GOAL_DEADLINE)
        sm = smooth_flags(r, batch) & passed
        for k in range(block.shape[0]):
            s = slice(k * n_p, (k + 1) * n_p)
            results.append(EvaluationResult(passed[s].copy(), sm[s].copy(), np.where(passed[s], tin[s], -1)))
    return results


def evaluate_solutions(cfg: MethodConfig, results: Sequence[ExperimentResult],
                       problems: Optional[Sequence[Problem]] = None) -> dict[int, EvaluationResult]:
    """Evaluate the smooth training solutions; keyed by experiment seed."""
    members = [r for r in results if r.smooth]
    if not members:
        return {}
    evals = evaluate_weights(cfg, np.stack([r.final_theta for r in members]), problems)
    return {r.seed: e for r, e in zip(members, evals)}


def aggregate(results: Sequence[ExperimentResult],
              evaluations: Optional[dict[int, EvaluationResult]] = None) -> SolutionStats:
    """Counts and means for one (method, reward) cell.

    ``mean_tin_c`` averages entry times over every (solution, problem) pair
    of the smooth solutions; ``mean_tin_prime_c`` does the same over the
    test problems for solutions that stay smooth there.
    """
    stats = SolutionStats(repetitions=len(results))
    if not results:
        return stats
    stats.method = results[0].method
    stats.reward_variant = results[0].reward_variant
    seeds = [r.seed for r in results]
    stats.seed_min, stats.seed_max = min(seeds), max(seeds)
    S = [r for r in results if r.solved_all]
    Sc = [r for r in S if r.smooth]
    stats.n_S, stats.n_Sc = len(S), len(Sc)
    if S:
        stats.mean_mc_S = float(np.mean([r.m_c for r in S]))
    if Sc:
        stats.mean_mc_Sc = float(np.mean([r.m_c for r in Sc]))
        stats.mean_tin_c = float(np.mean([t for r in Sc for t in r.t_in]))
    if evaluations is not None:
        stats.evaluated = True
        Sp = [evaluations[r.seed] for r in Sc if evaluations[r.seed].passed_all]
        Spc = [e for e in Sp if e.smooth_all]
        stats.n_Sp, stats.n_Spc = len(Sp), len(Spc)
        if Spc:
            stats.mean_tin_prime_c = float(np.mean(np.concatenate([e.t_in for e in Spc])))
    return stats
