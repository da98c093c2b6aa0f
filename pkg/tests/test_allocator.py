import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tofra.allocator import (AllocationProblem, RoundRobin, SaParams, baseline_best_path,
                             baseline_fmp, baseline_rr, best_path_flow, build_problem,
                             convexity_witness, end_to_end_success_probability, evaluate,
                             s2_function, solve_grid, solve_sa)
from tofra.scenario import fig3_scenario
from tofra.throughput import ThroughputModel, aggregate_throughput, link_throughput

from conftest import make_scenario, random_scenario

FAST = SaParams(restarts=4, iters_per_temp=100)


def test_fig3_problem_structure(fig3):
    prob = build_problem(fig3)
    assert prob.n_vars == 3 and prob.multi == [0] and prob.single == [1]
    kinds = [c.kind for c in prob.constraints]
    assert kinds == ["S2", "S4", "S4"]  # (g5), (g6), (g7)
    q1, q3 = 0.7, 0.4
    t12, t20, t30 = (link_throughput(l, fig3, [q1, q3]) for l in [(1, 2), (2, 0), (3, 0)])
    assert evaluate(prob, [q1, q3, 0.1]) == pytest.approx((t30 + 0.1, max(0.0, t12 - t20)))


def test_single_hop_flows_have_no_aux_or_constraints():
    sc = make_scenario([(0, 0), (60, 0), (200, 200), (260, 200)], [[0, 1], [2, 3]])
    prob = build_problem(sc)
    assert prob.n_vars == 2 and prob.constraints == []
    rates = [0.3, 0.9]
    want = link_throughput((0, 1), sc, rates) + link_throughput((2, 3), sc, rates)
    assert evaluate(prob, rates)[0] == pytest.approx(want)


def test_all_multi_hop_constraint_count():
    rng = np.random.default_rng(4)
    sc = random_scenario(rng, n_flows=4, max_hops=4)
    while any(f.hops == 1 for f in sc.flows):
        sc = random_scenario(rng, n_flows=4, max_hops=4)
    prob = build_problem(sc)
    assert prob.n_vars == 2 * len(sc.flows)
    n_s2 = sum(c.kind == "S2" for c in prob.constraints)
    assert n_s2 == sum(f.hops - 1 for f in sc.flows)
    assert sum(c.kind == "S4" for c in prob.constraints) == sum(f.hops for f in sc.flows)


def test_evaluate_examples(fig3):
    prob = build_problem(fig3)
    assert evaluate(prob, np.zeros(3)) == (0.0, 0.0)
    assert evaluate(prob, [0.01, 0.0, 1.0])[1] > 0  # aux far above the link throughputs
    with pytest.raises(ValueError):
        evaluate(prob, [0.0, 0.0])
    sc = fig3.with_gamma(0.5)
    p = build_problem(sc)
    t12, t20 = (link_throughput(l, sc, [1, 1]) for l in [(1, 2), (2, 0)])
    _, viol = evaluate(p, [1.0, 1.0, min(t12, t20)])
    assert (viol == 0) == (t12 <= t20)


@given(st.integers(0, 2**32 - 1))
def test_zero_point_always_feasible(seed):
    rng = np.random.default_rng(seed)
    sc = random_scenario(rng, n_flows=int(rng.integers(1, 5)), max_hops=3)
    prob = build_problem(sc)
    assert evaluate(prob, np.zeros(prob.n_vars)) == (0.0, 0.0)


def test_solve_sa_deterministic_and_feasible(fig3):
    prob = build_problem(fig3.with_gamma(1.5))
    a, b = solve_sa(prob, FAST), solve_sa(prob, FAST)
    assert np.array_equal(a.rates, b.rates) and a.predicted_aat == b.predicted_aat
    assert a.feasible and a.violation <= 1e-6
    assert a.predicted_aat == pytest.approx(evaluate(prob, np.r_[a.rates, a.aux])[0])
    assert a.stats["iterations"] > 0 and a.stats["restarts"] == 4
    c = solve_sa(prob, SaParams(restarts=4, iters_per_temp=100, seed=9))
    assert c.feasible


def test_penalised_walk_still_returns_feasible_point(fig3):
    res = solve_sa(build_problem(fig3.with_gamma(1.75)), SaParams(restarts=2, iters_per_temp=50, penalty=5.0))
    assert res.feasible and res.violation <= 1e-6


@pytest.mark.parametrize("kw", [dict(cooling=1.0), dict(cooling=0.0), dict(step=0), dict(penalty=-1),
                                dict(restarts=0), dict(t_final=2.0)])
def test_sa_params_validation(kw):
    with pytest.raises(ValueError):
        SaParams(**kw)


def two_flow_scenarios():
    rng = np.random.default_rng(12)
    out = [fig3_scenario(g) for g in (0.5, 1.25, 2.0)]
    while len(out) < 7:
        out.append(random_scenario(rng, n_flows=2, max_hops=3, side=250))
    return out


@pytest.mark.parametrize("idx", range(7))
def test_sa_not_worse_than_grid_oracle(idx):
    prob = build_problem(two_flow_scenarios()[idx])
    sa = solve_sa(prob)
    grid = solve_grid(prob, 0.01)
    assert sa.feasible and grid.feasible
    assert grid.violation <= 1e-6
    assert sa.predicted_aat >= grid.predicted_aat - 1e-3


def test_grid_examples():
    assert np.allclose(solve_grid(build_problem(fig3_scenario(0.5))).rates, [1, 1])
    res = solve_grid(build_problem(fig3_scenario(2.0)))
    # regression baseline from the exhaustive grid
    assert np.allclose(res.rates, [0.84, 0.04])
    assert res.predicted_aat == pytest.approx(0.3805629708356899, rel=1e-9)
    lone = make_scenario([(0, 0), (70, 0)], [[0, 1]])
    assert solve_grid(build_problem(lone)).rates[0] == 1.0


def test_grid_refuses_many_variables():
    rng = np.random.default_rng(0)
    sc = random_scenario(rng, n_flows=4)
    with pytest.raises(ValueError, match="at most"):
        solve_grid(build_problem(sc))


def test_delay_margin_tightens_s2(fig3):
    sc = fig3.with_gamma(1.75)
    loose = solve_grid(build_problem(sc), 0.01)
    tight = solve_grid(build_problem(sc, delay_margin=0.2), 0.01)
    assert tight.predicted_aat <= loose.predicted_aat
    t = ThroughputModel(sc).link_throughputs(tight.rates)
    assert t[0] <= 0.8 * t[1] + 1e-9


def test_end_to_end_success_probability():
    lone = make_scenario([(0, 0), (70, 0)], [[0, 1]], eta=0.0)
    assert end_to_end_success_probability(lone.flows[0], lone) == 1.0
    # eta chosen so that each 100 m hop succeeds alone with probability 0.9
    sc = make_scenario([(0, 0), (100, 0), (200, 0)], [[0, 1, 2]], gamma=1.0, eta=0.0)
    from tofra import phy
    g = phy.received_power_factor(0, 1, sc.positions, sc.phy)
    sc = make_scenario([(0, 0), (100, 0), (200, 0)], [[0, 1, 2]], gamma=1.0, eta=-np.log(0.9) * g)
    assert end_to_end_success_probability(sc.flows[0], sc) == pytest.approx(0.81)
    for g in (0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0):
        s = fig3_scenario(g)
        assert end_to_end_success_probability(s.flows[0], s) > end_to_end_success_probability(s.flows[1], s)


def test_best_path_baseline(fig3):
    lone = make_scenario([(0, 0), (60, 0), (120, 0)], [[0, 1, 2]])
    a, b = baseline_best_path(lone, sa=FAST), solve_sa(build_problem(lone), FAST)
    assert np.array_equal(a.rates, b.rates) and a.predicted_aat == b.predicted_aat
    for g in (0.5, 1.0, 2.0):
        sc = fig3.with_gamma(g)
        bp = baseline_best_path(sc, sa=FAST)
        assert bp.stats["best_flow"] == 0 and bp.rates[1] == 0.0 and bp.rates[0] > 0
        tofra = solve_sa(build_problem(sc), FAST)
        assert bp.predicted_aat <= tofra.predicted_aat + 1e-3


def test_best_path_tie_goes_to_lower_flow():
    sc = make_scenario([(0, 0), (50, 0), (400, 400), (450, 400)], [[0, 1], [2, 3]])
    assert best_path_flow(sc) == 0


def test_fmp_baseline(fig3):
    assert baseline_fmp(fig3).tolist() == [1.0, 1.0]
    for g in (0.25, 0.5, 0.75, 1.0):
        tofra = solve_grid(build_problem(fig3.with_gamma(g)), 0.01)
        assert np.allclose(tofra.rates, baseline_fmp(fig3))
    sc = fig3.with_gamma(2.0)
    tofra = solve_sa(build_problem(sc), FAST)
    assert aggregate_throughput(sc, baseline_fmp(sc)) < aggregate_throughput(sc, tofra.rates)


def test_round_robin_schedule():
    rr = RoundRobin(4)
    assert [rr.active_flow(s) for s in range(6)] == [0, 1, 2, 3, 0, 1]
    assert RoundRobin(4).activations(40).tolist() == [10] * 4
    assert RoundRobin(1).activations(7).tolist() == [7]
    assert baseline_rr(fig3_scenario()).m == 2


def g5(sc, q1, q3):
    t = ThroughputModel(sc).link_throughputs(np.array([q1, q3]))
    return t[0] - t[1]


def test_g5_is_not_convex(fig3):
    prob = AllocationProblem(fig3)
    (c,) = [c for c in prob.constraints if c.kind == "S2"]
    g = s2_function(prob, c)
    assert g(np.array([0.3, 0.7])) == pytest.approx(g5(fig3, 0.3, 0.7), abs=1e-12)
    a, b, th, gap = convexity_witness(g, 2)
    mid = th * np.array(a) + (1 - th) * np.array(b)
    assert g5(fig3, *mid) > th * g5(fig3, *a) + (1 - th) * g5(fig3, *b)
