import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binomtest

from tofra import phy
from tofra.allocator import RoundRobin, SaParams, build_problem, solve_sa
from tofra.simulator import (SimConfig, backoff_equivalent_prob, link_success_census,
                             queue_slope, queue_stability_report, run)
from tofra.throughput import link_throughput

from conftest import make_scenario, random_scenario


def test_perfect_link_delivers_every_slot():
    sc = make_scenario([(0, 0), (10, 0)], [[0, 1]], eta=0.0)
    m = run(sc, [1.0], SimConfig(total_slots=2000, seed=1))
    assert m.throughput[0] == 1.0 and m.aat == 1.0
    c = link_success_census(m)[(0, 1)]
    assert c.ratio == 1.0 and c.successes == c.attempts == m.slots
    assert c.low < 1.0 == c.high


def test_single_link_throughput_matches_q_times_p():
    sc = make_scenario([(0, 0), (120, 0)], [[0, 1]], gamma=1.0, eta=1e-9)
    p = phy.noise_factor(0, 1, sc.positions, sc.phy)
    m = run(sc, [0.5], SimConfig(total_slots=110_000, warmup_slots=10_000, seed=3))
    n, want = m.slots, 0.5 * p
    assert abs(m.throughput[0] - want) <= 3 * math.sqrt(want * (1 - want) / n)


def test_determinism(fig3):
    cfg = SimConfig(total_slots=3000, seed=7)
    a, b = run(fig3, [0.8, 0.6], cfg), run(fig3, [0.8, 0.6], cfg)
    assert a.aat == b.aat
    assert np.array_equal(a.queue_trace, b.queue_trace)
    assert a.link_successes == b.link_successes
    assert np.array_equal(a.delay_mean, b.delay_mean, equal_nan=True)
    c = run(fig3, [0.8, 0.6], SimConfig(total_slots=3000, seed=8))
    assert not np.array_equal(a.queue_trace, c.queue_trace)


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1), st.sampled_from([None, 1, 3]), st.booleans(),
       st.sampled_from(["bernoulli", "backoff"]))
def test_packet_conservation(seed, retx, sat, policy):
    rng = np.random.default_rng(seed)
    sc = random_scenario(rng, n_flows=int(rng.integers(1, 4)), max_hops=3, side=200)
    rates = rng.uniform(0, 1, len(sc.flows))
    m = run(sc, rates, SimConfig(total_slots=600, max_retransmits=retx, saturated_relays=sat,
                                 relay_policy=policy, seed=seed % 1000))
    assert np.array_equal(m.injected, m.delivered_total + m.dropped + m.in_flight)
    assert m.aat == pytest.approx(m.throughput.sum())
    if retx is None:
        assert not m.dropped.any()


def test_dummies_never_counted(fig3):
    # flow 0 is off, so relay 2 only ever forwards dummies
    m = run(fig3, [0.0, 1.0], SimConfig(total_slots=5000, saturated_relays=True, seed=2))
    assert m.delivered_total[0] == 0 and m.injected[0] == 0 and np.isnan(m.delay_mean[0])
    assert m.link_attempts[(2, 0)] > 0
    assert (1, 2) not in link_success_census(m)  # never attempted
    quiet = run(fig3, [0.0, 1.0], SimConfig(total_slots=5000, saturated_relays=True,
                                            silent_idle_paths=True, seed=2))
    assert quiet.link_attempts[(2, 0)] == 0
    assert quiet.throughput[1] > m.throughput[1]


def test_saturated_infinite_retx_links_match_model(fig3):
    rates = [0.9, 0.7]
    m = run(fig3, rates, SimConfig(total_slots=110_000, warmup_slots=10_000, max_retransmits=None,
                                   saturated_relays=True, seed=4))
    for link in fig3.links:
        t = link_throughput(link, fig3, rates)
        # every link's transmitter is always backlogged here, so per-slot successes are Bernoulli(t)
        est = m.link_successes[link] / m.slots
        assert abs(est - t) <= 3 * math.sqrt(t * (1 - t) / m.slots), link


def test_census_matches_reweighted_active_sets():
    sc = make_scenario([(0, 0), (80, 0), (60, 70), (150, 60), (20, -90), (110, -70)],
                       [[0, 1], [2, 3], [4, 5]], gamma=1.0, eta=1e-9)
    m = run(sc, [0.6, 0.5, 0.7], SimConfig(total_slots=40_000, seed=6, trace_active_sets=True))
    census = link_success_census(m)
    for link in sc.links:
        i, j = link
        n = m.link_attempts[link]
        pred = sum(cnt * (0.0 if busy else phy.success_probability(i, j, {i, *others},
                                                                   sc.positions, sc.phy))
                   for (others, busy, _), cnt in m.active_sets[link].items()) / n
        c = census[link]
        assert abs(c.ratio - pred) <= 3 * math.sqrt(pred * (1 - pred) / n)
        assert c.low <= c.ratio <= c.high


def test_queue_slope_helper():
    assert queue_slope(np.zeros(100)) == 0.0
    assert queue_slope(np.arange(100)) == pytest.approx(1.0)


def test_idle_relay_is_stable(fig3):
    m = run(fig3, [0.0, 1.0], SimConfig(total_slots=4000, seed=1))
    rep = queue_stability_report(m)
    assert rep[2].slope == 0 and rep[2].stable


def s2_chain():
    # strong first hop, weak relay (tx prob 0.1) on the second
    return make_scenario([(0, 0), (60, 0), (120, 0)], [[0, 1, 2]], relay_prob=0.1)


def test_s2_violating_rates_grow_the_relay_queue():
    sc = s2_chain()
    m = run(sc, [1.0], SimConfig(total_slots=20_000, max_retransmits=None, seed=1))
    rep = queue_stability_report(m)
    assert not rep[1].stable and rep[1].slope > 0.1


def test_tofra_rates_keep_fig3_relay_stable(fig3):
    res = solve_sa(build_problem(fig3), SaParams(restarts=4, iters_per_temp=100))
    m = run(fig3, res.rates, SimConfig(total_slots=20_000, seed=5))
    assert queue_stability_report(m)[2].stable


def test_raising_gamma_never_helps_links():
    sc = make_scenario([(0, 0), (80, 0), (60, 70), (150, 60)], [[0, 1], [2, 3]],
                       gamma=0.8, eta=1e-9)
    ups = {l: 0 for l in sc.links}
    reps = 20
    for r in range(reps):
        cfg = SimConfig(total_slots=2000, seed=100 + r)
        lo = link_success_census(run(sc, [0.7, 0.7], cfg))
        hi = link_success_census(run(sc.with_gamma(1.2), [0.7, 0.7], cfg))
        for l in sc.links:
            ups[l] += hi[l].ratio > lo[l].ratio
    for l, k in ups.items():
        assert binomtest(k, reps, 0.5, alternative="greater").pvalue > 0.05


def test_round_robin_policy(fig3):
    rr = run(fig3, RoundRobin(2), SimConfig(total_slots=4000, seed=3))
    # each source transmits in exactly half the slots
    assert rr.injected.sum() > 0
    assert rr.link_attempts[(3, 0)] == rr.slots // 2
    lone = make_scenario([(0, 0), (90, 0)], [[0, 1]])
    cfg = SimConfig(total_slots=3000, seed=9)
    a, b = run(lone, RoundRobin(1), cfg), run(lone, [1.0], cfg)
    assert a.aat == b.aat and a.link_successes == b.link_successes
    with pytest.raises(ValueError):
        run(fig3, RoundRobin(3), cfg)


def test_backoff_policy(fig3):
    assert backoff_equivalent_prob(5) == pytest.approx(2 / 7)
    m = run(fig3, [1.0, 1.0], SimConfig(total_slots=20_000, relay_policy="backoff",
                                        saturated_relays=True, seed=2))
    share = m.link_attempts[(2, 0)] / m.slots
    assert share == pytest.approx(backoff_equivalent_prob(5), abs=0.03)


@pytest.mark.parametrize("kw", [dict(total_slots=10, warmup_slots=10), dict(warmup_slots=-1),
                                dict(max_retransmits=0), dict(relay_policy="csma"),
                                dict(contention_window=-1)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SimConfig(**kw)


def test_policy_validation(fig3):
    with pytest.raises(ValueError):
        run(fig3, [0.5], SimConfig(total_slots=100))
    with pytest.raises(ValueError):
        run(fig3, [0.5, 1.5], SimConfig(total_slots=100))
