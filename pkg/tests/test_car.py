import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fuzzypg import car
from fuzzypg.car import (
    CarState,
    EpisodeTrace,
    Outcome,
    Problem,
    RewardConfig,
    check_smoothness,
    classify_outcome,
    evaluation_problems,
    learning_problems,
    reward,
    run_episode,
    step,
)


def constant(y):
    return lambda state: y


class TestStep:
    def test_full_throttle_reaches_100(self):
        s = CarState(0, 50.0, 0.0)
        for _ in range(10):
            s = step(s, 5.0, 0.0)
        assert s.following_speed == 100.0
        assert s.t == 10

    def test_zero_input(self):
        s = step(CarState(3, 20.0, 42.0), 0.0, 42.0)
        assert s == CarState(4, 20.0, 42.0)

    def test_semi_implicit_update(self):
        s = step(CarState(0, 10.0, 30.0), 2.5, 20.0)
        assert s.following_speed == 35.0
        assert s.distance == pytest.approx(10.0 + (20.0 - 35.0) / 3.6)

    def test_speed_clamped(self):
        assert step(CarState(0, 10.0, 4.0), -5.0, 0.0).following_speed == 0.0

    @given(st.lists(st.floats(-5, 5), max_size=110), st.floats(0, 150))
    def test_speed_never_negative(self, ys, v0):
        s = CarState(0, 100.0, v0)
        for y in ys:
            s = step(s, y, 50.0)
            assert s.following_speed >= 0.0


class TestEpisode:
    def test_static_start_succeeds(self):
        trace = run_episode(Problem(40, 40, 20, 10, 30), constant(0.0))
        assert trace.outcome == Outcome(car.SUCCESS, t_in=0)
        assert len(trace.states) == 111 and trace.episode_length_used == 110
        assert np.all(trace.distances() == 20.0)

    def test_braking_behind_fast_leader_goes_too_far(self):
        trace = run_episode(Problem(60, 30, 50, 30, 45), constant(-5.0))
        # speed hits 0 after 3 steps; by hand: d_t = 50 + sum over steps of (60 - v_t)/3.6
        d, v, t = 50.0, 30.0, 0
        while d < 200:
            v = max(0.0, v - 10.0)
            d += (60 - v) / 3.6
            t += 1
        assert trace.outcome == Outcome(car.TOO_FAR, t_far=t)
        assert trace.states[-1].t == t == 10
        assert trace.distances()[-1] >= 200

    def test_full_throttle_into_slow_leader_collides(self):
        trace = run_episode(Problem(20, 30, 10, 10, 15), constant(5.0))
        # speeds 40, 50: d = 10 - 20/3.6 - 30/3.6 < 0 at t = 2
        assert trace.outcome.kind == car.COLLISION
        assert trace.states[-1].t == 2
        assert trace.outcome.x1 == pytest.approx(10 - 20 / 3.6 - 30 / 3.6)
        assert trace.outcome.x1 < 0

    @given(st.floats(-5, 5), st.sampled_from(learning_problems()))
    def test_always_terminates(self, y, problem):
        trace = run_episode(problem, constant(y))
        assert trace.episode_length_used <= 110
        assert trace.outcome is not None

    def test_csv_export(self):
        trace = run_episode(Problem(20, 30, 10, 10, 15), constant(5.0))
        lines = trace.to_csv().splitlines()
        assert lines[0] == "t,distance,speed,y1"
        assert lines[1].startswith("0,10.0,30.0,5.0")
        assert len(lines) == 1 + len(trace.states)


def make_trace(distances, problem=Problem(30, 30, 20, 10, 30)):
    states = [CarState(t, float(d), 30.0) for t, d in enumerate(distances)]
    return EpisodeTrace(problem, states, [0.0] * (len(states) - 1))


class TestClassify:
    def test_always_in(self):
        assert classify_outcome(make_trace([20.0] * 111)) == Outcome(car.SUCCESS, t_in=0)

    @pytest.mark.parametrize("t_in,kind", [(79, car.SUCCESS), (80, car.SUCCESS), (81, car.LATE_SUCCESS),
                                           (110, car.LATE_SUCCESS)])
    def test_entry(self, t_in, kind):
        d = [50.0] * t_in + [20.0] * (111 - t_in)
        assert classify_outcome(make_trace(d)) == Outcome(kind, t_in=t_in)

    def test_reentry_uses_last_run(self):
        d = [20.0] * 30 + [35.0] * 5 + [20.0] * 76
        assert classify_outcome(make_trace(d)).t_in == 35

    def test_boundaries_inclusive(self):
        d = [10.0] * 50 + [30.0] * 61
        assert classify_outcome(make_trace(d)).t_in == 0

    def test_never_entered(self):
        out = classify_outcome(make_trace([20.0] * 110 + [31.0]))
        assert out == Outcome(car.NEVER_ENTERED, x1=31.0)

    def test_rejects_terminated(self):
        with pytest.raises(ValueError):
            classify_outcome(make_trace([20.0] * 30))


class TestReward:
    def test_case1(self):
        o = Outcome(car.SUCCESS, t_in=79)
        assert reward(o, "r1") == 0.0
        assert reward(o, "r2") == pytest.approx(1.25e-4)

    def test_case2(self):
        o = Outcome(car.LATE_SUCCESS, t_in=90)
        assert reward(o, "r1") == pytest.approx(-0.1 - 0.01)
        assert reward(o, "r2") == pytest.approx(0.01 / 91)

    def test_case3(self):
        o = Outcome(car.NEVER_ENTERED, x1=100.0)
        want = -abs((20.0 - 100.0) / 20000) - 0.01
        assert reward(o, "r1", RewardConfig(), 10, 30) == pytest.approx(want)
        assert reward(o, "r2", RewardConfig(), 10, 30) == pytest.approx(want)

    def test_case4(self):
        o = Outcome(car.COLLISION, x1=-1.0)
        assert reward(o, "r1") == pytest.approx(-0.02)
        assert reward(o, "r2") == pytest.approx(-0.02)

    def test_case5(self):
        o = Outcome(car.TOO_FAR, t_far=50)
        assert reward(o, "r1") == pytest.approx(-0.61)
        assert reward(o, "r2") == pytest.approx(-0.61)

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            reward(Outcome(car.SUCCESS, t_in=1), "r3")

    @given(st.integers(0, 110), st.floats(0, 250), st.floats(-40, 0, exclude_max=True), st.integers(1, 110))
    def test_r1_never_positive(self, t_in, x_final, x_hit, t_far):
        kind = car.SUCCESS if t_in <= 80 else car.LATE_SUCCESS
        for o in (Outcome(kind, t_in=t_in), Outcome(car.NEVER_ENTERED, x1=x_final),
                  Outcome(car.COLLISION, x1=x_hit), Outcome(car.TOO_FAR, t_far=t_far)):
            assert reward(o, "r1", RewardConfig(), 10, 30) <= 0

    def test_case2_decreasing(self):
        for variant in ("r1", "r2"):
            vals = [reward(Outcome(car.LATE_SUCCESS, t_in=t), variant) for t in range(81, 111)]
            assert all(b < a for a, b in zip(vals, vals[1:]))


class TestProblems:
    def test_learning(self):
        ps = learning_problems()
        assert len(ps) == 16
        assert ps[0] == Problem(20, 30, 50, 30, 45)
        assert ps[1] == Problem(20, 30, 50, 10, 15)
        assert ps[15] == Problem(60, 30, 10, 10, 15)
        assert all(p.following_speed_init == 30 for p in ps)

    def test_evaluation(self):
        ps = evaluation_problems()
        assert len(ps) == 697
        assert len(set(ps)) == 697
        first, second = ps[:625], ps[625:]
        assert len(second) == 72
        assert {p.leading_speed for p in first} == {45, 55, 65, 75, 85}
        assert {p.leading_speed for p in second} == {40, 50, 60}
        assert not any(p.leading_speed == 50 and p.distance_init == 20 for p in second)
        excluded = 3 ** 4 - len(second)
        assert excluded == 9

    def test_problem_validation(self):
        with pytest.raises(ValueError):
            Problem(30, 30, 20, 30, 10)


class TestSmoothness:
    def test_matched(self):
        assert check_smoothness([50.0] * 111, 50.0)

    def test_final_acceleration(self):
        speeds = [50.0] * 110 + [50.12]
        assert not check_smoothness(speeds, 50.12)

    def test_small_mismatch(self):
        assert check_smoothness([50.05] * 111, 50.0)

    def test_truncated(self):
        assert not check_smoothness([50.0] * 40, 50.0)
