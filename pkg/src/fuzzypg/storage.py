"""Config loading, weight files and CSV writers."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .car import Problem, learning_problems
from .experiment import EvaluationResult, ExperimentResult, MethodConfig, SolutionStats
from .fuzzy import ShapeConfig

SEED_ENV = "FUZZYPG_SEED"

RESULT_FIELDS = ["method", "reward", "seed", "m_c", "solved_all", "smooth"] + [
    f"t_in_{k}" for k in range(1, 17)
]
SUMMARY_FIELDS = [
    "method", "reward", "repetitions", "seed_min", "seed_max",
    "S", "S_c", "mean_m_c", "mean_t_in_c", "mean_m_c_over_S",
    "evaluated", "S_prime", "S_prime_c", "S_prime_c_over_S_c", "mean_t_in_prime_c",
]
EVAL_FIELDS = ["weights", "problem", "leading_speed", "following_speed", "distance", "l1", "l2",
               "passed", "smooth", "t_in"]
EVAL_SUMMARY_FIELDS = ["weights", "problems", "passed", "smooth", "in_S_prime", "in_S_prime_c", "mean_t_in"]


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    method: str = "i"
    reward: str = "r1"
    repetitions: int = 200
    base_seed: Optional[int] = None
    policy: dict = field(default_factory=dict)  # T, T_prime, lam
    learn: dict = field(default_factory=dict)  # epsilon, epsilon_prime, max_learning_iterations
    c: float = -0.01
    shape: dict = field(default_factory=dict)
    out: str = "out"
    evaluate: bool = False

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def method_config(self) -> MethodConfig:
        try:
            return MethodConfig.create(self.method, self.reward, c=self.c,
                                       shape=ShapeConfig.from_dict(self.shape),
                                       **self.policy, **self.learn)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def seed(self) -> int:
        if self.base_seed is not None:
            return int(self.base_seed)
        return int(os.environ.get(SEED_ENV, 0))


def load_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as f:
            return RunConfig.from_dict(json.load(f))
    except (OSError, json.JSONDecodeError, TypeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


# --- weights ----------------------------------------------------------------

def save_weights(path: Path, theta: Sequence[float]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps([float(t) for t in theta]) + "\n", encoding="utf-8")


def load_weights(path: Path) -> np.ndarray:
    """Read a JSON array of non-negative rule weights."""
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    numeric = isinstance(data, list) and all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in data)
    if not data or not numeric:
        raise ValueError(f"{path}: expected a JSON array of numbers")
    theta = np.array(data, dtype=float)
    if not np.all(np.isfinite(theta)) or np.any(theta < 0):
        raise ValueError(f"{path}: weights must be finite and non-negative")
    return theta


def weight_files(path: Path) -> list[Path]:
    if path.is_dir():
        return sorted(path.glob("*.json"), key=lambda p: (len(p.stem), p.stem))
    return [path]


# --- CSV --------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(round(v, 6))
    return str(v)


def write_csv(path: Path, fields: list[str], rows: Iterable[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(fields)
        for row in rows:
            w.writerow([_fmt(row.get(k)) for k in fields])


def result_rows(results: Sequence[ExperimentResult]):
    for r in results:
        row = {"method": r.method, "reward": r.reward_variant, "seed": r.seed, "m_c": r.m_c,
               "solved_all": r.solved_all, "smooth": r.smooth}
        row.update({f"t_in_{k + 1}": t for k, t in enumerate(r.t_in)})
        yield row


def summary_row(s: SolutionStats) -> dict:
    return {
        "method": s.method, "reward": s.reward_variant, "repetitions": s.repetitions,
        "seed_min": s.seed_min, "seed_max": s.seed_max, "S": s.n_S, "S_c": s.n_Sc,
        "mean_m_c": s.mean_mc_Sc, "mean_t_in_c": s.mean_tin_c, "mean_m_c_over_S": s.mean_mc_S,
        "evaluated": s.evaluated,
        "S_prime": s.n_Sp if s.evaluated else None,
        "S_prime_c": s.n_Spc if s.evaluated else None,
        "S_prime_c_over_S_c": s.ratio_Spc_Sc if s.evaluated else None,
        "mean_t_in_prime_c": s.mean_tin_prime_c if s.evaluated else None,
    }


def evaluation_rows(name: str, problems: Sequence[Problem], ev: EvaluationResult):
    for k, p in enumerate(problems):
        yield {
            "weights": name, "problem": k + 1, "leading_speed": p.leading_speed,
            "following_speed": p.following_speed_init, "distance": p.distance_init,
            "l1": p.l1, "l2": p.l2, "passed": bool(ev.passed[k]), "smooth": bool(ev.smooth[k]),
            "t_in": int(ev.t_in[k]) if ev.t_in[k] >= 0 else None,
        }


def parse_problem(spec: str) -> Problem:
    """``train:N`` (1-16), ``test:N`` (1-697) or ``lead,follow,distance,l1,l2``."""
    from .car import evaluation_problems

    try:
        if ":" in spec:
            which, idx = spec.split(":", 1)
            table = {"train": learning_problems, "test": evaluation_problems}[which]()
            k = int(idx)
            if not 1 <= k <= len(table):
                raise IndexError(k)
            return table[k - 1]
        parts = [float(v) for v in spec.split(",")]
        if len(parts) != 5:
            raise ValueError("need five numbers")
        return Problem(*parts)
    except (KeyError, ValueError, IndexError) as exc:
        raise ConfigError(f"invalid problem spec {spec!r}: {exc}") from exc
