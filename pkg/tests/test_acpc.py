import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ltlacpc.acpc import (
    MixingCapExceeded,
    assemble_policy,
    estimate_mixing_cycle,
    evaluate_acpc,
    evaluate_t_cycle_acpc,
    optimize_acpc,
    optimize_t_cycle,
    t_cycle_curve,
)
from ltlacpc.errors import AssumptionViolation, DivergentACPC
from ltlacpc.graph import accepting_mecs, compute_cycle_bound, max_reach_probability
from ltlacpc.mdp import make_mdp
from ltlacpc.simulation import Simulator
from oracles import (
    acpc_oracle,
    mirror_product,
    policy_ratio,
    random_amec_mdp,
    random_mdp,
    t_cycle_exact_unroll,
    t_cycle_monte_carlo,
)

seeds = st.integers(0, 2**32 - 1)


def only_amec(m):
    p = mirror_product(m)
    (c,) = accepting_mecs(p)
    return p, c


def self_loop(cost=0.7):
    m = make_mdp(["a"], "a", {("a", "x"): [("a", 1.0)]}, {"a": ["pi"]}, {("a", "x"): cost}, ap=["pi"])
    return only_amec(m)


def with_markers(rng, m, p_extra=0.4):
    labels = {s: (["pi"] if s == "s0" or rng.random() < p_extra else []) for s in m.states}
    return make_mdp(m.states, m.initial, m.transitions, labels, m.cost, m.rmax, ap=["pi"])


def random_policy(rng, c):
    return {s: c.actions[s][int(rng.integers(len(c.actions[s])))] for s in c.ordered()}


def multichain_amec():
    m = make_mdp(
        ["u", "v"], "u",
        {("u", "stay"): [("u", 1.0)], ("u", "go"): [("v", 1.0)],
         ("v", "stay"): [("v", 1.0)], ("v", "go"): [("u", 1.0)]},
        {"u": ["pi"], "v": ["pi"]},
        {("u", "stay"): 2.0, ("u", "go"): 1.0, ("v", "stay"): 0.5, ("v", "go"): 1.0},
        ap=["pi"],
    )
    return only_amec(m)


def test_single_marker_self_loop():
    p, c = self_loop(0.7)
    assert evaluate_acpc(c, {0: "x"}).J == pytest.approx(0.7)
    assert evaluate_t_cycle_acpc(c, {0: "x"}, 5, 0).J == pytest.approx(0.7)
    assert estimate_mixing_cycle(c, {0: "x"}, 1e-6, 0) == 1


def test_two_state_loop_costs_three():
    m = make_mdp(
        ["s0", "s1"], "s0",
        {("s0", "x"): [("s1", 1.0)], ("s1", "x"): [("s0", 1.0)]},
        {"s0": ["pi"]}, {("s0", "x"): 1.0, ("s1", "x"): 2.0}, ap=["pi"],
    )
    p, c = only_amec(m)
    f = {s: "x" for s in c.states}
    assert evaluate_acpc(c, f).J == pytest.approx(3.0)
    assert optimize_acpc(c)[1].J == pytest.approx(3.0)


def test_multichain_policy_violates_assumption_4():
    p, c = multichain_amec()
    f = {s: "stay" for s in c.states}
    with pytest.raises(AssumptionViolation) as info:
        evaluate_acpc(c, f)
    assert info.value.number == 4
    assert len(info.value.witnesses) == 2
    # the optimizer still finds the cheap self loop at v
    g, v = optimize_acpc(c)
    assert v.J == pytest.approx(0.5)


def test_recurrent_class_without_marker_diverges():
    m = make_mdp(
        ["s0", "s1"], "s0",
        {("s0", "x"): [("s1", 1.0)], ("s1", "x"): [("s0", 1.0)], ("s1", "y"): [("s1", 1.0)]},
        {"s0": ["pi"]}, {}, ap=["pi"],
    )
    p, c = only_amec(m)
    s1 = p.index[("s1", "q0")]
    with pytest.raises(DivergentACPC):
        evaluate_acpc(c, {0: "x", s1: "y"})
    with pytest.raises(DivergentACPC):
        evaluate_t_cycle_acpc(c, {0: "x", s1: "y"}, 3, 0)


def test_single_policy_component():
    rng = np.random.default_rng(4)
    m = random_amec_mdp(rng, 5, n_actions=1)
    p, c = only_amec(m)
    f = {s: c.actions[s][0] for s in c.ordered()}
    g, v = optimize_acpc(c)
    assert g == f and v.J == pytest.approx(evaluate_acpc(c, f).J)
    g2, v2 = optimize_t_cycle(c, 4, 0)
    assert g2 == f


def test_optimize_t_cycle_exhaustive_on_four_states():
    rng = np.random.default_rng(8)
    m = with_markers(rng, random_amec_mdp(rng, 4))
    p, c = only_amec(m)
    g, v = optimize_t_cycle(c, 3, 0)
    best = min(
        t_cycle_exact_unroll(c, dict(zip(c.ordered(), ch)), 3, 0)[0]
        for ch in itertools.product(*(c.actions[s] for s in c.ordered()))
    )
    assert v.J == pytest.approx(best, abs=1e-9)
    assert v.method == "exhaustive"


def test_heuristic_path_flagged():
    rng = np.random.default_rng(9)
    m = with_markers(rng, random_amec_mdp(rng, 6))
    p, c = only_amec(m)
    _, v = optimize_t_cycle(c, 3, 0, max_policies=1)
    _, exact = optimize_t_cycle(c, 3, 0)
    assert v.method == "heuristic"
    assert v.J >= exact.J - 1e-12


def test_mixing_gap_is_not_monotone():
    # two markers with very different cycle costs: the gap is 5/T for odd T
    # and 0 for even T, so the smallest admissible T is 2
    m = make_mdp(
        ["a", "b"], "a",
        {("a", "x"): [("b", 1.0)], ("b", "x"): [("a", 1.0)]},
        {"a": ["pi"], "b": ["pi"]}, {("a", "x"): 10.0, ("b", "x"): 0.0}, ap=["pi"],
    )
    p, c = only_amec(m)
    f = {s: "x" for s in c.states}
    assert evaluate_acpc(c, f).J == pytest.approx(5.0)
    curve = t_cycle_curve(c, f, 0, 5) - 5.0
    assert curve == pytest.approx([5.0, 0.0, 5 / 3, 0.0, 1.0])
    assert estimate_mixing_cycle(c, f, 0.1, 0) == 2


def test_mixing_cap_reports_gaps():
    m = make_mdp(
        ["a", "b"], "a",
        {("a", "x"): [("b", 1.0)], ("b", "x"): [("b", 0.999), ("a", 0.001)]},
        {"a": ["pi"], "b": ["pi"]}, {("a", "x"): 10.0, ("b", "x"): 0.0}, ap=["pi"],
    )
    p, c = only_amec(m)
    f = {s: "x" for s in c.states}
    with pytest.raises(MixingCapExceeded) as info:
        estimate_mixing_cycle(c, f, 1e-3, 0, cap=100)
    assert info.value.gaps[64] > 1e-3
    T = estimate_mixing_cycle(c, f, 0.5, 0)
    curve = t_cycle_curve(c, f, 0, T) - evaluate_acpc(c, f).J
    assert curve[-1] < 0.5 and all(x >= 0.5 for x in curve[:-1])


def test_assemble_inside_component(case_product, case_amec):
    g, _ = optimize_acpc(case_amec)
    pol = assemble_policy(case_product, {}, g, case_amec)
    assert all(pol[s] == g[s] for s in pol)
    assert set(pol) <= case_amec.states


def test_assemble_two_regions_and_stay_inside():
    m = make_mdp(
        ["s0", "s1", "s2", "s3"], "s0",
        {("s0", "a"): [("s1", 0.5), ("s0", 0.5)], ("s0", "b"): [("s3", 1.0)],
         ("s1", "a"): [("s2", 0.6), ("s1", 0.4)], ("s2", "a"): [("s1", 1.0)],
         ("s2", "b"): [("s2", 1.0)], ("s3", "a"): [("s3", 1.0)]},
        {"s1": ["pi"]}, {("s1", "a"): 1.0, ("s2", "a"): 1.0, ("s2", "b"): 0.1}, ap=["pi"],
    )
    p = mirror_product(m)
    (c,) = [c for c in accepting_mecs(p) if c.markers]
    reach = max_reach_probability(p, c.states)
    g, _ = optimize_acpc(c)
    pol = assemble_policy(p, reach.policy, g, c)
    for s, a in pol.items():
        assert a == (g[s] if s in c.states else reach.policy[s])
    # simulate: the component is entered once and never left
    sim = Simulator(m, seed=3, record=True)
    named = {p.states[i][0]: a for i, a in pol.items()}
    run = sim.run_policy(named, cycles=10_000)
    inside = [p.index[(s, "q0")] in c.states for s, *_ in run.trajectory]
    first = inside.index(True)
    assert all(inside[first:])


# -- properties ----------------------------------------------------------


@settings(max_examples=80, deadline=None)
@given(seeds)
def test_optimize_matches_exhaustive_enumeration(seed):
    rng = np.random.default_rng(seed)
    p = mirror_product(random_mdp(rng, int(rng.integers(2, 7)), int(rng.integers(1, 4)), p_marker=0.5))
    for c in accepting_mecs(p):
        if not c.markers:
            continue
        g, v = optimize_acpc(c)
        assert v.J == pytest.approx(acpc_oracle(c), abs=1e-9)
        # local optimality against single-state deviations
        for s in c.ordered():
            for a in c.actions[s]:
                trial = dict(g)
                trial[s] = a
                try:
                    assert evaluate_acpc(c, trial).J >= v.J - 1e-9
                except (AssumptionViolation, DivergentACPC):
                    pass


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_policy_iteration_is_monotone_and_bounded(seed):
    rng = np.random.default_rng(seed)
    m = with_markers(rng, random_amec_mdp(rng, int(rng.integers(2, 8))))
    p, c = only_amec(m)
    g, v = optimize_acpc(c)
    assert all(b <= a + 1e-9 for a, b in zip(v.history, v.history[1:]))
    assert 0 <= v.J <= compute_cycle_bound(c) * m.rmax + 1e-9
    f = random_policy(rng, c)
    assert evaluate_acpc(c, f).J == pytest.approx(policy_ratio(c, f), rel=1e-9)


@settings(max_examples=60, deadline=None)
@given(seeds, st.integers(1, 6))
def test_t_cycle_matches_forward_unrolling(seed, T):
    rng = np.random.default_rng(seed)
    m = with_markers(rng, random_amec_mdp(rng, int(rng.integers(2, 7))))
    p, c = only_amec(m)
    f = random_policy(rng, c)
    start = int(rng.choice(c.ordered()))
    want, mass = t_cycle_exact_unroll(c, f, T, start)
    assert mass < 1e-12
    assert evaluate_t_cycle_acpc(c, f, T, start).J == pytest.approx(want, rel=1e-9)


def test_t_cycle_matches_monte_carlo():
    rng = np.random.default_rng(21)
    for k in range(3):
        m = with_markers(rng, random_amec_mdp(rng, 5))
        p, c = only_amec(m)
        f = random_policy(rng, c)
        exact = evaluate_t_cycle_acpc(c, f, 3, 0).J
        mean, se = t_cycle_monte_carlo(c, f, 3, 0, 200_000, seed=k)
        assert abs(mean - exact) <= 3 * se


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_t_cycle_converges_and_mixing_cycle_is_smallest(seed):
    rng = np.random.default_rng(seed)
    m = with_markers(rng, random_amec_mdp(rng, int(rng.integers(2, 7))))
    p, c = only_amec(m)
    g, v = optimize_acpc(c)
    curve = t_cycle_curve(c, g, 0, 2000) - v.J
    # T times the gap stays bounded, so the gap itself dies out
    assert abs(curve[-1]) < 1e-2
    eps = 0.05
    T = estimate_mixing_cycle(c, g, eps, 0)
    head = t_cycle_curve(c, g, 0, T) - v.J
    assert head[-1] < eps and all(x >= eps for x in head[:-1])


def test_renewal_ratio_matches_long_simulation():
    rng = np.random.default_rng(5)
    m = with_markers(rng, random_amec_mdp(rng, 5))
    p, c = only_amec(m)
    f = random_policy(rng, c)
    J = evaluate_acpc(c, f).J
    sim = Simulator(m, seed=12)
    named = {p.states[i][0]: a for i, a in f.items()}
    # batch means over 20 batches of 20k steps
    ratios = []
    for _ in range(20):
        r = sim.run_policy(named, steps=20_000)
        ratios.append(r.acpc)
    se = np.std(ratios, ddof=1) / np.sqrt(len(ratios))
    assert abs(np.mean(ratios) - J) <= 3 * se + 1e-3
