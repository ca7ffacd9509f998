"""Weighted fuzzy rule bases and the Boltzmann policy they induce.

A rule ``i`` reads ``if x_1 is A_1 and ... then y_1 is B_1 ... with theta_i``.
Truth values combine by product, rules combine through the energy
``E(y; x) = -sum_i theta_i A^i(x) B^i(y)`` and the stochastic policy over
the discrete output grid is ``pi(y) ~ exp(-E(y)/T)``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

PIECEWISE_LINEAR = "piecewise-linear"
CRISP_POINT = "crisp-point"


def output_grid(lo: float = -5.0, hi: float = 5.0, step: float = 0.1) -> np.ndarray:
    """Admissible pedal outputs ``lo, lo + step, ..., hi``.

    Values are computed as integer multiples divided by ``1/step`` so the
    grid is exactly symmetric and contains an exact zero.
    """
    scale = round(1.0 / step)
    return np.arange(round(lo * scale), round(hi * scale) + 1) / scale


DEFAULT_GRID = output_grid()
DEFAULT_GRID.flags.writeable = False


@dataclass(frozen=True)
class MembershipFunction:
    kind: str
    breakpoints: tuple[tuple[float, float], ...] = ()
    location: float = 0.0

    def __post_init__(self):
        if self.kind == PIECEWISE_LINEAR:
            bps = tuple((float(a), float(d)) for a, d in self.breakpoints)
            if not bps:
                raise ValueError("piecewise-linear membership needs breakpoints")
            xs = [a for a, _ in bps]
            if any(b <= a for a, b in zip(xs, xs[1:])):
                raise ValueError(f"breakpoint abscissas must increase strictly: {xs}")
            if any(not 0.0 <= d <= 1.0 for _, d in bps):
                raise ValueError("membership degrees must lie in [0, 1]")
            object.__setattr__(self, "breakpoints", bps)
        elif self.kind == CRISP_POINT:
            object.__setattr__(self, "location", float(self.location))
        else:
            raise ValueError(f"unknown membership kind {self.kind!r}")

    @classmethod
    def ramp(cls, *points: tuple[float, float]) -> "MembershipFunction":
        return cls(PIECEWISE_LINEAR, tuple(points))

    @classmethod
    def crisp(cls, location: float) -> "MembershipFunction":
        return cls(CRISP_POINT, location=location)

    def __call__(self, x):
        return membership_eval(self, x)

    def to_dict(self) -> dict:
        if self.kind == CRISP_POINT:
            return {"kind": self.kind, "location": self.location}
        return {"kind": self.kind, "breakpoints": [list(bp) for bp in self.breakpoints]}

    @classmethod
    def from_dict(cls, d: dict) -> "MembershipFunction":
        if d["kind"] == CRISP_POINT:
            return cls.crisp(d["location"])
        return cls(d["kind"], tuple(tuple(bp) for bp in d["breakpoints"]))


def membership_eval(mf: MembershipFunction, x):
    """Degree of membership of ``x`` (scalar or array).

    Piecewise-linear functions interpolate between breakpoints and hold the
    end degrees constant outside them.
    """
    if mf.kind == CRISP_POINT:
        out = np.where(np.asarray(x, dtype=float) == mf.location, 1.0, 0.0)
    else:
        xs, ds = zip(*mf.breakpoints)
        out = np.interp(x, xs, ds)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class FuzzyRule:
    antecedents: tuple[MembershipFunction, ...]
    consequents: tuple[MembershipFunction, ...]
    label: str = ""

    def to_dict(self) -> dict:
        return {
            "antecedents": [mf.to_dict() for mf in self.antecedents],
            "consequents": [mf.to_dict() for mf in self.consequents],
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FuzzyRule":
        return cls(
            tuple(MembershipFunction.from_dict(m) for m in d["antecedents"]),
            tuple(MembershipFunction.from_dict(m) for m in d["consequents"]),
            d.get("label", ""),
        )


@dataclass(frozen=True)
class RuleBase:
    rules: tuple[FuzzyRule, ...]
    input_dim: int
    output_dim: int

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        if not self.rules:
            raise ValueError("a rule base needs at least one rule")
        for k, rule in enumerate(self.rules):
            if len(rule.antecedents) != self.input_dim or len(rule.consequents) != self.output_dim:
                raise ValueError(
                    f"rule {k + 1} has {len(rule.antecedents)}/{len(rule.consequents)} parts, "
                    f"expected {self.input_dim}/{self.output_dim}"
                )

    def __len__(self) -> int:
        return len(self.rules)

    @property
    def labels(self) -> list[str]:
        return [r.label for r in self.rules]

    def antecedent_vector(self, x: Sequence[float]) -> np.ndarray:
        """``A^i(x)`` for every rule."""
        return np.array([antecedent_truth(r, x) for r in self.rules])

    def consequent_matrix(self, grid: np.ndarray = DEFAULT_GRID) -> np.ndarray:
        """``B^i(y_h)`` as an ``(n_rules, len(grid))`` array (single-output bases)."""
        if self.output_dim != 1:
            raise ValueError("consequent_matrix only supports one output variable")
        return np.array([membership_eval(r.consequents[0], grid) for r in self.rules])

    def to_dict(self) -> dict:
        return {
            "rules": [r.to_dict() for r in self.rules],
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RuleBase":
        return cls(tuple(FuzzyRule.from_dict(r) for r in d["rules"]), d["input_dim"], d["output_dim"])


def _product_truth(mfs: Sequence[MembershipFunction], values: Sequence[float], what: str) -> float:
    values = np.atleast_1d(np.asarray(values, dtype=float))
    if len(values) != len(mfs):
        raise ValueError(f"{what} has {len(values)} components, rule expects {len(mfs)}")
    out = 1.0
    for mf, v in zip(mfs, values):
        out *= membership_eval(mf, v)
    return out


def antecedent_truth(rule: FuzzyRule, x: Sequence[float]) -> float:
    return _product_truth(rule.antecedents, x, "input")


def consequent_truth(rule: FuzzyRule, y: Sequence[float]) -> float:
    return _product_truth(rule.consequents, y, "output")


def _check_theta(rb: RuleBase, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (len(rb),):
        raise ValueError(f"theta has shape {theta.shape}, rule base has {len(rb)} rules")
    return theta


def energy(rb: RuleBase, theta, x: Sequence[float], y: Sequence[float]) -> float:
    """How strongly the weighted rules support output ``y`` for input ``x`` (negated)."""
    theta = _check_theta(rb, theta)
    total = 0.0
    for th, rule in zip(theta, rb.rules):
        total += th * antecedent_truth(rule, x) * consequent_truth(rule, y)
    return -total


def energies_over_grid(antecedents: np.ndarray, theta: np.ndarray, consequents: np.ndarray) -> np.ndarray:
    """Energy at every grid point, batched over leading axes of ``antecedents``/``theta``.

    Rules are accumulated one at a time in a fixed order so a row's result
    does not depend on how many rows are evaluated together.
    """
    w = theta * antecedents
    out = np.zeros(w.shape[:-1] + consequents.shape[-1:])
    for i in range(consequents.shape[0]):
        out -= w[..., i, None] * consequents[i]
    return out


def boltzmann(energies: np.ndarray, temperature: float) -> np.ndarray:
    """Softmax of ``-energies/temperature`` along the last axis.

    Energies are shifted by their minimum first, which leaves the
    distribution unchanged and keeps ``exp`` from overflowing.
    """
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    shifted = energies - energies.min(axis=-1, keepdims=True)
    p = np.exp(-shifted / temperature)
    return p / p.sum(axis=-1, keepdims=True)


def boltzmann_policy(rb: RuleBase, theta, x: Sequence[float], temperature: float,
                     grid: np.ndarray = DEFAULT_GRID) -> np.ndarray:
    theta = _check_theta(rb, theta)
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    e = energies_over_grid(rb.antecedent_vector(x), theta, rb.consequent_matrix(grid))
    return boltzmann(e, temperature)


def gravity_center(probs: np.ndarray, grid: np.ndarray = DEFAULT_GRID):
    """Expected output under ``probs`` (batched over leading axes)."""
    return (probs * grid).sum(axis=-1)


# --- the car speed-control rule base -------------------------------------

DISTANCE_TERMS = ("long", "short")
SPEED_TERMS = ("fast", "slow")
OPERATION_TERMS = ("strong ac.", "weak ac.", "strong de.", "weak de.", "none")


@dataclass(frozen=True)
class ShapeConfig:
    """Membership shapes for the car rule base.

    ``short`` falls linearly from 1 at ``l1 - distance_margin`` to 0 at
    ``l2 + distance_margin``; ``slow`` falls from 1 at ``v - speed_margin``
    to 0 at ``v + speed_margin``. ``long``/``fast`` are the complements.
    Output shapes are breakpoint lists on the pedal axis.
    """

    speed_margin: float = 10.0
    distance_margin: float = 0.0
    strong_ac: tuple[tuple[float, float], ...] = ((0.0, 0.0), (5.0, 1.0))
    weak_ac: tuple[tuple[float, float], ...] = ((0.0, 0.0), (2.5, 1.0), (5.0, 0.0))
    strong_de: tuple[tuple[float, float], ...] = ((-5.0, 1.0), (0.0, 0.0))
    weak_de: tuple[tuple[float, float], ...] = ((-5.0, 0.0), (-2.5, 1.0), (0.0, 0.0))
    none_location: float = 0.0

    def __post_init__(self):
        for name in ("strong_ac", "weak_ac", "strong_de", "weak_de"):
            object.__setattr__(self, name, tuple(tuple(map(float, bp)) for bp in getattr(self, name)))
        if self.speed_margin <= 0:
            raise ValueError("speed_margin must be positive")
        if self.distance_margin < 0:
            raise ValueError("distance_margin must be non-negative")

    def operations(self) -> list[MembershipFunction]:
        return [
            MembershipFunction.ramp(*self.strong_ac),
            MembershipFunction.ramp(*self.weak_ac),
            MembershipFunction.ramp(*self.strong_de),
            MembershipFunction.ramp(*self.weak_de),
            MembershipFunction.crisp(self.none_location),
        ]

    def to_dict(self) -> dict:
        return {k: ([list(bp) for bp in v] if isinstance(v, tuple) else v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "ShapeConfig":
        return cls(**d)


DEFAULT_SHAPE = ShapeConfig()


def build_car_rulebase(l1: float, l2: float, v: float, shape: ShapeConfig = DEFAULT_SHAPE) -> RuleBase:
    """The 20 rules {long, short} x {fast, slow} x {5 pedal operations}.

    Rule order follows the usual table: distance varies slowest, the pedal
    operation fastest, so rule 6 is "long / slow / strong ac.".
    """
    if not l1 < l2:
        raise ValueError(f"need l1 < l2, got l1={l1}, l2={l2}")
    if v < 0:
        raise ValueError(f"leading speed must be non-negative, got {v}")
    lo, hi = l1 - shape.distance_margin, l2 + shape.distance_margin
    short = MembershipFunction.ramp((lo, 1.0), (hi, 0.0))
    long_ = MembershipFunction.ramp((lo, 0.0), (hi, 1.0))
    vlo, vhi = v - shape.speed_margin, v + shape.speed_margin
    slow = MembershipFunction.ramp((vlo, 1.0), (vhi, 0.0))
    fast = MembershipFunction.ramp((vlo, 0.0), (vhi, 1.0))
    dist = {"long": long_, "short": short}
    speed = {"fast": fast, "slow": slow}
    ops = dict(zip(OPERATION_TERMS, shape.operations()))
    rules = []
    for d in DISTANCE_TERMS:
        for s in SPEED_TERMS:
            for o in OPERATION_TERMS:
                rules.append(FuzzyRule((dist[d], speed[s]), (ops[o],), f"{d} / {s} / {o}"))
    return RuleBase(tuple(rules), 2, 1)


def car_antecedents(distance, speed, l1, l2, v, shape: ShapeConfig = DEFAULT_SHAPE) -> np.ndarray:
    """Vectorized ``A^i(x)`` for the car rule base, shape ``(..., 20)``.

    All arguments broadcast; this is the hot path used by the experiment
    runner and must agree with ``build_car_rulebase(...).antecedent_vector``.
    """
    lo = np.asarray(l1, dtype=float) - shape.distance_margin
    hi = np.asarray(l2, dtype=float) + shape.distance_margin
    short = np.clip((hi - distance) / (hi - lo), 0.0, 1.0)
    long_ = 1.0 - short
    vlo = np.asarray(v, dtype=float) - shape.speed_margin
    slow = np.clip((vlo + 2 * shape.speed_margin - speed) / (2 * shape.speed_margin), 0.0, 1.0)
    fast = 1.0 - slow
    groups = np.stack([long_ * fast, long_ * slow, short * fast, short * slow], axis=-1)
    return np.repeat(groups, len(OPERATION_TERMS), axis=-1)
