import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fuzzypg.fuzzy import DEFAULT_GRID, boltzmann_policy, build_car_rulebase, gravity_center
from fuzzypg.oracles import (
    NumericalDomainError,
    OracleReport,
    brute_force_expectation,
    finite_difference_log_policy_gradient,
    grid_argmin_smoothed_energy,
)
from fuzzypg.policy import PolicyParams, eligibility_base, eligibility_smoothed
from fuzzypg.validation import check_distributions, check_gradients, check_minimizer, run_validation


@pytest.fixture(scope="module")
def rb():
    return build_car_rulebase(30, 45, 50)


class TestReport:
    def test_floor(self):
        r = OracleReport()
        r.add([1e-12], [0.0])
        assert r.max_rel_error == pytest.approx(1e-4)
        r.add([2.0, 1.0], [1.0, 1.0])
        assert (r.max_abs_error, r.max_rel_error, r.cases_checked) == (1.0, 1.0, 2)


class TestFiniteDifference:
    def test_matches_base_on_car(self, rb):
        rng = np.random.default_rng(0)
        report = OracleReport()
        for _ in range(20):
            theta = rng.dirichlet(np.ones(20))
            x = (rng.uniform(20, 60), rng.uniform(30, 70))
            y_t = float(rng.choice(DEFAULT_GRID[30:70]))
            report.add(eligibility_base(rb, theta, x, y_t, 0.04),
                       finite_difference_log_policy_gradient(rb, theta, x, y_t, 0.0, PolicyParams(), DEFAULT_GRID))
        assert report.max_rel_error <= 1e-4, report

    def test_matches_smoothed_on_car(self, rb):
        rng = np.random.default_rng(1)
        report = OracleReport()
        for _ in range(20):
            theta = rng.dirichlet(np.ones(20))
            x = (rng.uniform(20, 60), rng.uniform(30, 70))
            params = PolicyParams(lam=0.06)
            y_prev = float(rng.choice(DEFAULT_GRID))
            y_t = float(rng.choice(DEFAULT_GRID[40:60]))
            report.add(eligibility_smoothed(rb, theta, x, y_t, y_prev, params),
                       finite_difference_log_policy_gradient(rb, theta, x, y_t, y_prev, params, DEFAULT_GRID,
                                                             "pi_prime"))
        assert report.max_rel_error <= 1e-4, report

    def test_flat_smoothed_policy_has_no_gradient(self, rb):
        theta = np.random.default_rng(2).dirichlet(np.ones(20))
        g = finite_difference_log_policy_gradient(rb, theta, (38.0, 47.0), 1.0, 0.0,
                                                  PolicyParams(T_prime=1e12), DEFAULT_GRID, "pi_prime")
        assert np.abs(g).max() < 1e-6

    def test_validation(self, rb):
        theta = np.full(20, 0.05)
        with pytest.raises(ValueError):
            finite_difference_log_policy_gradient(rb, theta, (30, 30), 0.0, 0.0, PolicyParams(), DEFAULT_GRID,
                                                  delta=1e-2)
        with pytest.raises(ValueError):
            finite_difference_log_policy_gradient(rb, theta, (30, 30), 0.0, 0.0, PolicyParams(), DEFAULT_GRID,
                                                  which="pi2")

    def test_underflow(self):
        rb = build_car_rulebase(10, 15, 30)
        theta = np.zeros(20)
        theta[10] = 1.0  # short / fast / strong ac. dominates at a cold temperature
        with pytest.raises(NumericalDomainError):
            finite_difference_log_policy_gradient(rb, theta, (5.0, 60.0), -5.0, 0.0, PolicyParams(T=1e-4),
                                                  DEFAULT_GRID)


class TestExpectation:
    def test_mass_and_mean(self, rb):
        pi = boltzmann_policy(rb, np.random.default_rng(3).dirichlet(np.ones(20)), (35.0, 52.0), 0.04)
        assert brute_force_expectation(lambda y: 1.0, pi, DEFAULT_GRID) == pytest.approx(1.0, abs=1e-12)
        assert brute_force_expectation(lambda y: y, pi, DEFAULT_GRID) == pytest.approx(gravity_center(pi),
                                                                                       abs=1e-14)


class TestMinimizer:
    def test_lambda_zero_nearest(self):
        assert grid_argmin_smoothed_energy(1.23456, 3.0, 0.0) == pytest.approx(1.2346, abs=1e-9)

    def test_fixed_point(self):
        assert grid_argmin_smoothed_energy(-2.2, -2.2, 0.8) == pytest.approx(-2.2, abs=1e-4)

    def test_rejects_coarse(self):
        with pytest.raises(ValueError):
            grid_argmin_smoothed_energy(0.0, 0.0, 0.1, resolution=0.01)

    @settings(max_examples=50)
    @given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0, 3))
    def test_between_inputs(self, y_g, y_prev, lam):
        y = grid_argmin_smoothed_energy(y_g, y_prev, lam, resolution=1e-3)
        assert min(y_g, y_prev) - 1e-3 <= y <= max(y_g, y_prev) + 1e-3


class TestValidationSuite:
    def test_small_runs_pass(self):
        assert check_gradients(20, seed=5).max_rel_error <= 1e-4
        report, identity = check_minimizer(50, seed=5)
        assert identity and report.max_abs_error <= 1e-4
        worst_sum, worst_mean = check_distributions(2, seed=5)
        assert worst_sum <= 1e-12 and worst_mean <= 1e-10

    def test_run_validation(self):
        rows = list(run_validation(10))
        assert len(rows) == 3
        assert all(passed for _, _, passed in rows)
        assert math.isfinite(rows[0][1].max_rel_error)
