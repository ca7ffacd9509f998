"""Acceptance criteria, each printing one PASS/FAIL line.

The learning cells are expensive (tens of minutes in total on one core), so
each (method, reward) cell is run once with 500 seeds and shared. The
200-repetition check uses seeds 0-199 of the same runs; experiments in a
batch are independent, so this equals a separate 200-seed run.
"""

import time

import numpy as np
import pytest

from fuzzypg.car import CarState, Problem, evaluation_problems, run_episode, step
from fuzzypg.cli import main
from fuzzypg.experiment import METHODS, REWARDS, MethodConfig, aggregate, evaluate_solutions, run_experiments
from fuzzypg.validation import check_distributions, check_gradients, check_minimizer

LARGE_REPS = 500
SMALL_REPS = 200


@pytest.fixture
def report(capsys):
    def emit(number: int, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'}  criterion {number}: {detail}")
        assert ok, detail
    return emit


_cells: dict = {}


def cell(method: str, reward: str):
    key = (method, reward)
    if key not in _cells:
        _cells[key] = run_experiments(MethodConfig.create(method, reward), range(LARGE_REPS))
    return _cells[key]


def test_1_gradient_oracle(report):
    start = time.perf_counter()
    r = check_gradients(1000, seed=2024)
    elapsed = time.perf_counter() - start
    ok = r.max_rel_error <= 1e-4 and elapsed < 60
    report(1, ok, f"{r}, {elapsed:.1f}s")


def test_2_minimizer(report):
    r, identity = check_minimizer(1000, seed=2024)
    report(2, r.max_abs_error <= 1e-4 and identity, f"{r}; lambda=0 gives y_G exactly: {identity}")


def test_3_distributions(report):
    worst_sum, worst_mean = check_distributions(30, seed=2024)
    report(3, worst_sum <= 1e-12 and worst_mean <= 1e-10,
           f"max |sum - 1| = {worst_sum:.2e}, max |E[e_i]| = {worst_mean:.2e}")


def test_4_dynamics(report):
    s = CarState(0, 1000.0, 20.0)
    for _ in range(10):
        s = step(s, 5.0, 0.0)
    gain = s.following_speed - 20.0
    trace = run_episode(Problem(50, 50, 25, 10, 30), lambda st: 0.0)
    flat = len(trace.states) == 111 and all(x.distance == 25.0 for x in trace.states)
    report(4, gain == 100.0 and flat, f"speed gain {gain} km/h in 10 steps; constant distance over 110 steps: {flat}")


@pytest.mark.slow
@pytest.mark.parametrize("method", METHODS)
@pytest.mark.parametrize("reward", REWARDS)
def test_5_learning_success(report, method, reward):
    first = cell(method, reward)[:SMALL_REPS]
    n_s = sum(r.solved_all for r in first)
    report(5, n_s / SMALL_REPS >= 0.90, f"({method}, {reward}) |S|/{SMALL_REPS} = {n_s / SMALL_REPS:.3f}")


@pytest.mark.slow
@pytest.mark.parametrize("reward", REWARDS)
def test_6_smoothing_improves(report, reward):
    sc_i = aggregate(cell("i", reward)).n_Sc
    sc_iii = aggregate(cell("iii", reward)).n_Sc
    report(6, sc_iii > sc_i, f"({reward}) |S_c|(iii) = {sc_iii} vs |S_c|(i) = {sc_i} of {LARGE_REPS}")


@pytest.mark.slow
@pytest.mark.parametrize("method", ["i", "ii"])
def test_7_reward_design(report, method):
    m1 = aggregate(cell(method, "r1")).mean_mc_Sc
    m2 = aggregate(cell(method, "r2")).mean_mc_Sc
    report(7, m2 < m1, f"({method}) mean m_c over S_c: r2 {m2:.2f} vs r1 {m1:.2f}")


@pytest.mark.slow
@pytest.mark.parametrize("method,reward", [("i", "r1"), ("iii", "r2")])
def test_8_rule_polarity(report, method, reward):
    sc = [r.final_theta for r in cell(method, reward) if r.smooth]
    th = np.mean(sc, axis=0)
    ok = th[5] > th[7] and th[12] > th[10]
    report(8, ok, f"({method}, {reward}) theta6 {th[5]:.4f} > theta8 {th[7]:.4f}; "
                  f"theta13 {th[12]:.4f} > theta11 {th[10]:.4f}")


@pytest.mark.slow
def test_9_evaluation_pipeline(report):
    problems = evaluation_problems()
    first, second = problems[:625], problems[625:]
    composition = (len(problems) == 697 and len(second) == 72
                   and {p.leading_speed for p in first} == {45, 55, 65, 75, 85}
                   and {p.leading_speed for p in second} == {40, 50, 60})
    cfg = MethodConfig.create("iii", "r1")
    results = cell("iii", "r1")[:SMALL_REPS]
    stats = aggregate(results, evaluate_solutions(cfg, results, problems))
    chain = stats.n_Spc <= stats.n_Sp <= stats.n_Sc
    report(9, composition and chain,
           f"697 problems with stated composition: {composition}; "
           f"|S'_c| = {stats.n_Spc} <= |S'| = {stats.n_Sp} <= |S_c| = {stats.n_Sc}")


@pytest.mark.slow
def test_10_reproducible_cli(report, tmp_path):
    args = ["learn", "--method", "iii", "--reward", "r1", "--reps", "10", "--seed", "42"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    names = ["results.csv", "summary.csv"] + [f"weights/{s}.json" for s in range(42, 52)]
    same = all((tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in names)
    report(10, same, f"byte-identical results.csv and {len(names) - 2} weight files across reruns: {same}")
