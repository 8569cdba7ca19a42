import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _instances import random_feasible_problem, random_problem, random_sequence
from fleetswap.scheduler import (
    Infeasible,
    ReplacementOrder,
    ScheduleProblem,
    baseline_policy,
    build_qp,
    diff_solutions,
    dump_problem,
    enumerate_optimum,
    feasible,
    flatten,
    load_problem,
    objective_value,
    predict_discharge,
    problem_from_record,
    problem_to_record,
    semantic_objective,
    solution_to_record,
    solve,
)


def _problem(**kw):
    base = dict(
        n_robots=4,
        horizon_k=1,
        formation_size_f=2,
        d0=(1100, 0, 0, 0),
        x0=(1, 1, 0, 0),
        hub_presence=((0, 0, 1, 1),),
        r_c=-50.0,
        r_d=50.0,
        d_th=1000.0,
        w1=1.0,
        w2=1.0,
    )
    base.update(kw)
    return ScheduleProblem(**base)


def _three_robot_two_step():
    return ScheduleProblem(
        n_robots=3,
        horizon_k=2,
        formation_size_f=2,
        d0=(100, 200, 300),
        x0=(1, 1, 0),
        hub_presence=((0, 0, 1), (0, 0, 1)),
        r_c=-60.0,
        r_d=90.0,
        d_th=1000.0,
    )


class TestProblemValidation:
    @pytest.mark.parametrize(
        "kw",
        [
            {"x0": (1, 0, 0, 0)},
            {"horizon_k": 0, "hub_presence": ()},
            {"formation_size_f": 5},
            {"r_d": -60.0},
            {"hub_presence": ((1, 0, 1, 1),)},
            {"d0": (1, 2, 3)},
            {"d0": (-1, 0, 0, 0)},
            {"x0": (1, 2, 0, 0)},
        ],
    )
    def test_rejects_malformed(self, kw):
        with pytest.raises(ValueError):
            _problem(**kw)

    def test_default_ids_are_one_based(self):
        assert _problem().robot_ids == (1, 2, 3, 4)


class TestPredictDischarge:
    def test_all_charging_floors_at_zero(self):
        p = _problem(d0=(1100, 30, 0, 600))
        assert predict_discharge(p, [(0, 0, 0, 0)], 1) == [1050.0, 0.0, 0.0, 550.0]

    def test_all_active(self):
        p = _problem(d0=(1100, 30, 0, 600))
        assert predict_discharge(p, [(1, 1, 1, 1)], 1) == [1150.0, 80.0, 50.0, 650.0]

    def test_two_step_summation(self):
        # counts (2, 1, 1): d0 + 2*(-60) + 150*count
        p = _three_robot_two_step()
        assert predict_discharge(p, [(1, 0, 1), (1, 1, 0)], 2) == [280.0, 230.0, 330.0]

    def test_index_bounds(self):
        p = _three_robot_two_step()
        with pytest.raises(ValueError):
            predict_discharge(p, [(1, 0, 1), (1, 1, 0)], 3)
        with pytest.raises(ValueError):
            predict_discharge(p, [(1, 0, 1)], 2)


class TestBuildQp:
    def test_single_robot_hand_expansion(self):
        p = ScheduleProblem(1, 1, 1, (400.0,), (1,), ((0,),), r_c=-50.0, r_d=70.0, d_th=1000.0, w1=1.0, w2=0.5)
        P, Q = build_qp(p)
        assert P.tolist() == [[2 * 120.0]]
        assert Q.tolist() == [400.0 - 50.0 - 0.5]
        # D^1 X^1 - w2 * retention = (400 + 70) - 0.5
        assert objective_value(P, Q, [1]) == pytest.approx(469.5)

    def test_two_step_block_pattern(self):
        p = _three_robot_two_step()
        p = ScheduleProblem(**{**p.__dict__, "w1": 0.0, "w2": 1.0})
        P, Q = build_qp(p)
        n = 3
        assert np.all(P[:n, :n] == 0)
        assert np.all(P[n:, n:] == 0)
        assert np.array_equal(P[:n, n:], -np.eye(n))
        assert np.array_equal(P[n:, :n], -np.eye(n))
        assert Q.tolist() == [-1.0, -1.0, 0.0, 0.0, 0.0, 0.0]

    def test_symmetric(self):
        P, _ = build_qp(random_problem(np.random.default_rng(3)))
        assert np.array_equal(P, P.T)

    def test_zero_weights(self):
        P, Q = build_qp(_problem(w1=0.0, w2=0.0))
        assert not P.any() and not Q.any()

    def test_objective_value_trivia(self):
        P, Q = build_qp(_three_robot_two_step())
        assert objective_value(P, Q, [0] * 6) == 0.0
        x = [1, 0, 1, 0, 1, 1]
        assert objective_value(np.zeros_like(P), Q, x) == pytest.approx(float(Q @ np.array(x)))
        with pytest.raises(ValueError):
            objective_value(P, Q, [1, 0])

    @settings(max_examples=200, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_matrix_form_matches_direct_sums(self, seed):
        rng = np.random.default_rng(seed)
        p = random_problem(rng)
        x_seq = random_sequence(rng, p.n_robots, p.horizon_k)
        P, Q = build_qp(p)
        assert objective_value(P, Q, flatten(x_seq)) == pytest.approx(semantic_objective(p, x_seq), rel=1e-9, abs=1e-9)


class TestFeasible:
    def test_retention_is_feasible_when_charged(self):
        p = _problem(d0=(0, 0, 0, 0))
        assert feasible(p, [(1, 1, 0, 0)])

    def test_wrong_cardinality(self):
        assert not feasible(_problem(d0=(0, 0, 0, 0)), [(1, 1, 1, 0)])

    def test_entrant_not_at_hub(self):
        p = _problem(d0=(0, 0, 0, 0), hub_presence=((0, 0, 1, 0),))
        assert feasible(p, [(0, 1, 1, 0)])
        assert not feasible(p, [(0, 1, 0, 1)])

    def test_battery_threshold(self):
        assert not feasible(_problem(), [(1, 1, 0, 0)])

    def test_wrong_shape(self):
        assert not feasible(_problem(), [(1, 1, 0)])
        assert not feasible(_problem(), [])


class TestSolve:
    def test_all_robots_needed(self):
        p = ScheduleProblem(3, 2, 3, (10, 20, 30), (1, 1, 1), ((0, 0, 0), (0, 0, 0)), -50.0, 50.0, 1000.0)
        assert solve(p).x == ((1, 1, 1), (1, 1, 1))

    def test_forced_leaver_and_tie_break(self):
        sol = solve(_problem())
        assert sol.x == ((0, 1, 1, 0),)
        best, _ = enumerate_optimum(_problem())
        assert sol.objective_value == best

    def test_infeasible(self):
        with pytest.raises(Infeasible):
            solve(_problem(hub_presence=((0, 0, 0, 0),)))

    def test_predicted_discharge_reported(self):
        sol = solve(_problem())
        assert sol.predicted_d == ((1050.0, 50.0, 50.0, 0.0),)

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_matches_exhaustive_oracle(self, seed):
        p, best = random_feasible_problem(np.random.default_rng(seed), max_n=6)
        sol = solve(p)
        assert sol.objective_value == best
        assert feasible(p, sol.x)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_retention_wins_without_discharge_weight(self, seed):
        rng = np.random.default_rng(seed)
        p = random_problem(rng, max_n=6)
        p = ScheduleProblem(**{**p.__dict__, "w1": 0.0, "w2": 1.0, "d0": (0.0,) * p.n_robots, "d_th": 1200.0})
        assert solve(p).x == (p.x0,) * p.horizon_k

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), scale=st.sampled_from([0.25, 2.0, 8.0]))
    def test_scale_invariant_argmin(self, seed, scale):
        p, _ = random_feasible_problem(np.random.default_rng(seed), max_n=6)
        scaled = ScheduleProblem(**{**p.__dict__, "w1": p.w1 * scale, "w2": p.w2 * scale})
        assert solve(scaled).x == solve(p).x

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_diff_conserves_formation_size(self, seed):
        p, _ = random_feasible_problem(np.random.default_rng(seed), max_n=6)
        sol = solve(p)
        order = diff_solutions(p.x0, sol.x[0])
        assert len(order.leaving) == len(order.entering)
        after = set(i + 1 for i, v in enumerate(p.x0) if v) - set(order.leaving) | set(order.entering)
        assert len(after) == p.formation_size_f


class TestDiffSolutions:
    def test_pairs_in_ascending_order(self):
        order = diff_solutions((1, 1, 0, 0, 1), (0, 1, 1, 1, 0), hub="h1")
        assert order.leaving == (1, 5) and order.entering == (3, 4)
        assert order.pairs == [(1, 3), (5, 4)]
        assert order.hub_id == "h1"

    def test_no_change_is_empty(self):
        assert not diff_solutions((1, 0, 1), (1, 0, 1))

    def test_uses_robot_ids(self):
        order = diff_solutions((1, 0), (0, 1), robot_ids=(7, 9))
        assert order.pairs == [(7, 9)]

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            diff_solutions((1, 0), (1, 1))
        with pytest.raises(ValueError):
            ReplacementOrder((1,), ())


class TestBaselinePolicy:
    def test_single_swap(self):
        p = _problem(d0=(900, 100, 0, 600), hub_presence=((0, 0, 1, 1),))
        order = baseline_policy(p, 0.3)
        assert order.pairs == [(1, 3)] and not order.wait

    def test_nothing_below_threshold(self):
        assert not baseline_policy(_problem(d0=(100, 100, 0, 0)), 0.3)

    def test_two_leavers_one_entrant_waits(self):
        p = _problem(d0=(1000, 900, 0, 1100))
        order = baseline_policy(p, 0.3)
        assert order.pairs == [(1, 3)]
        assert order.wait

    def test_entrant_must_clear_threshold(self):
        p = _problem(d0=(900, 100, 1000, 1100))
        order = baseline_policy(p, 0.3)
        assert not order.leaving and order.wait

    def test_entrant_readiness_level(self):
        p = _problem(d0=(900, 100, 600, 100))
        assert baseline_policy(p, 0.3).pairs == [(1, 4)]
        p = _problem(d0=(900, 100, 600, 300))
        assert baseline_policy(p, 0.3).pairs == [(1, 4)]
        order = baseline_policy(p, 0.3, entrant_min_fraction=0.9)
        assert not order.leaving and order.wait

    def test_threshold_range(self):
        with pytest.raises(ValueError):
            baseline_policy(_problem(), 1.0)
        with pytest.raises(ValueError):
            baseline_policy(_problem(), 0.4, entrant_min_fraction=0.3)


class TestSerialization:
    def test_record_round_trip(self):
        p = random_problem(np.random.default_rng(11))
        assert problem_from_record(json.loads(json.dumps(problem_to_record(p)))) == p

    def test_file_round_trip(self, tmp_path):
        p = _problem()
        path = tmp_path / "problem.json"
        dump_problem(p, path)
        assert load_problem(path) == p

    def test_unknown_field_rejected(self):
        rec = problem_to_record(_problem())
        rec["gamma"] = 1
        with pytest.raises(ValueError):
            problem_from_record(rec)

    def test_solution_record(self):
        p = _problem()
        rec = solution_to_record(p, solve(p))
        assert rec["order"]["leaving"] == [1] and rec["order"]["entering"] == [3]
        assert rec["x"] == [[0, 1, 1, 0]]
