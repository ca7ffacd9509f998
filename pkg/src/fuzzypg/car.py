"""Two-car following scenario: dynamics, termination, outcomes and rewards.

Speeds are in km/h, distances in m, one control step is one second. The
leading car keeps its speed; the following car accelerates by ``2 * y1``
km/h per step and its speed is clamped at zero.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

EPISODE_LENGTH = 110
GOAL_DEADLINE = 80
MAX_DISTANCE = 200.0
KMH_PER_MPS = 3.6

SUCCESS = "success"
LATE_SUCCESS = "late_success"
NEVER_ENTERED = "never_entered"
COLLISION = "collision"
TOO_FAR = "too_far"
OUTCOME_KINDS = (SUCCESS, LATE_SUCCESS, NEVER_ENTERED, COLLISION, TOO_FAR)


@dataclass(frozen=True)
class Problem:
    leading_speed: float
    following_speed_init: float
    distance_init: float
    l1: float
    l2: float

    def __post_init__(self):
        if not self.l1 < self.l2:
            raise ValueError(f"need l1 < l2, got [{self.l1}, {self.l2}]")
        if min(self.leading_speed, self.following_speed_init, self.distance_init, self.l1) < 0:
            raise ValueError("speeds and distances must be non-negative")

    def initial_state(self) -> "CarState":
        return CarState(0, float(self.distance_init), float(self.following_speed_init))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CarState:
    t: int
    distance: float
    following_speed: float


@dataclass(frozen=True)
class Outcome:
    kind: str
    t_in: Optional[int] = None
    x1: Optional[float] = None
    t_far: Optional[int] = None

    @property
    def solved(self) -> bool:
        return self.kind == SUCCESS


@dataclass
class EpisodeTrace:
    problem: Problem
    states: list[CarState]
    outputs: list[float]
    outcome: Optional[Outcome] = None

    @property
    def episode_length_used(self) -> int:
        return len(self.outputs)

    def distances(self) -> np.ndarray:
        return np.array([s.distance for s in self.states])

    def speeds(self) -> np.ndarray:
        return np.array([s.following_speed for s in self.states])

    def to_csv(self) -> str:
        """One row per state; ``y1`` is the output applied from that state on."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "distance", "speed", "y1"])
        for k, s in enumerate(self.states):
            y = repr(float(self.outputs[k])) if k < len(self.outputs) else ""
            w.writerow([s.t, repr(float(s.distance)), repr(float(s.following_speed)), y])
        return buf.getvalue()


@dataclass(frozen=True)
class RewardConfig:
    c: float = -0.01


def step(state: CarState, y1: float, leading_speed: float) -> CarState:
    """Advance one second: speed first, then distance with the new speed."""
    speed = max(0.0, state.following_speed + 2.0 * y1)
    distance = state.distance + (leading_speed - speed) / KMH_PER_MPS
    return CarState(state.t + 1, distance, speed)


def entry_time(distances, l1: float, l2: float) -> Optional[int]:
    """Start of the uninterrupted in-range run that lasts to the final step."""
    inside = (np.asarray(distances) >= l1) & (np.asarray(distances) <= l2)
    if not inside[-1]:
        return None
    outside = np.flatnonzero(~inside)
    return int(outside[-1] + 1) if outside.size else 0


def classify_outcome(trace: EpisodeTrace) -> Outcome:
    """Outcome of an episode that ran to the final step without termination."""
    if trace.states[-1].t != EPISODE_LENGTH:
        raise ValueError("early-terminated episodes are classified by run_episode")
    t_in = entry_time(trace.distances(), trace.problem.l1, trace.problem.l2)
    if t_in is None:
        return Outcome(NEVER_ENTERED, x1=trace.states[-1].distance)
    if t_in <= GOAL_DEADLINE:
        return Outcome(SUCCESS, t_in=t_in)
    return Outcome(LATE_SUCCESS, t_in=t_in)


def run_episode(problem: Problem, controller: Callable[[CarState], float]) -> EpisodeTrace:
    state = problem.initial_state()
    trace = EpisodeTrace(problem, [state], [])
    for _ in range(EPISODE_LENGTH):
        y1 = float(controller(state))
        state = step(state, y1, problem.leading_speed)
        trace.outputs.append(y1)
        trace.states.append(state)
        if state.distance < 0:
            trace.outcome = Outcome(COLLISION, x1=state.distance)
            return trace
        if state.distance >= MAX_DISTANCE:
            trace.outcome = Outcome(TOO_FAR, t_far=state.t)
            return trace
    trace.outcome = classify_outcome(trace)
    return trace


def reward(outcome: Outcome, variant: str, cfg: RewardConfig = RewardConfig(),
           l1: float = 0.0, l2: float = 0.0) -> float:
    """Episode reward. ``r1`` only penalizes; ``r2`` also rewards early entry."""
    if variant not in ("r1", "r2"):
        raise ValueError(f"unknown reward variant {variant!r}")
    c = cfg.c
    kind = outcome.kind
    if kind == SUCCESS:
        return 0.0 if variant == "r1" else 0.01 / (outcome.t_in + 1)
    if kind == LATE_SUCCESS:
        return (GOAL_DEADLINE - outcome.t_in) / 100 + c if variant == "r1" else 0.01 / (outcome.t_in + 1)
    if kind == NEVER_ENTERED:
        return -abs(((l1 + l2) / 2 - outcome.x1) / 20000) + c
    if kind == COLLISION:
        return -outcome.x1 ** 2 / 100 + c
    if kind == TOO_FAR:
        return (outcome.t_far - EPISODE_LENGTH) / 100 + c
    raise ValueError(f"unknown outcome kind {kind!r}")


def learning_problems() -> list[Problem]:
    """The 16 training problems, in order."""
    problems = []
    for lead in (20, 30, 50, 60):
        for dist in (50, 10):
            for l1, l2 in ((30, 45), (10, 15)):
                problems.append(Problem(lead, 30, dist, l1, l2))
    return problems


def evaluation_problems() -> list[Problem]:
    """The 697 test problems: a 625-point grid plus 72 from a 3^4 grid."""
    first = itertools.product(
        (45, 55, 65, 75, 85),
        (0, 10, 30, 50, 70),
        (30, 45, 65, 70, 80),
        ((10, 30), (20, 40), (40, 60), (50, 60), (60, 70)),
    )
    second = itertools.product(
        (40, 50, 60),
        (20, 40, 60),
        (20, 40, 60),
        ((10, 20), (40, 50), (45, 60)),
    )
    problems = [Problem(lead, fol, d, l1, l2) for lead, fol, d, (l1, l2) in first]
    problems += [Problem(lead, fol, d, l1, l2) for lead, fol, d, (l1, l2) in second
                 if not (lead == 50 and d == 20)]
    return problems


def check_smoothness(speeds, leading_speed: float, tol: float = 0.1) -> bool:
    """Final acceleration and final speed mismatch both below ``tol`` km/h."""
    speeds = np.asarray(speeds)
    if len(speeds) != EPISODE_LENGTH + 1:
        return False
    return bool(abs(speeds[-1] - speeds[-2]) < tol and abs(speeds[-1] - leading_speed) < tol)
