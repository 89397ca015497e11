from statistics import NormalDist

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ltlacpc.acpc import evaluate_t_cycle_acpc, optimize_acpc
from ltlacpc.automata import parse_ltl, translate_fragment
from ltlacpc.errors import BudgetExhausted, ModelError, StructureViolation
from ltlacpc.graph import accepting_mecs, entrance
from ltlacpc.learning import (
    KnownnessCriterion,
    ModelBook,
    ProductWalker,
    TransitionEstimate,
    explore_amec,
    is_known,
    model_learning_and_policy_finding,
    structural_mdp,
    update_estimate,
)
from ltlacpc.mdp import make_mdp, structure_of
from ltlacpc.product import build_product
from ltlacpc.simulation import Simulator
from ltlacpc.synthesis import synthesize
from oracles import universal_dra

GF = translate_fragment(parse_ltl("G F pi", ["pi"]))


def estimate(counts):
    est = TransitionEstimate([f"t{k}" for k in range(len(counts))])
    est.counts[:] = counts
    est.n = int(sum(counts))
    return est


def four_state():
    """Small AMEC with probabilities 0.3/0.7 and one cycle marker."""
    return make_mdp(
        ["s0", "s1", "s2", "s3"], "s0",
        {("s0", "a"): [("s1", 0.3), ("s2", 0.7)], ("s0", "b"): [("s2", 1.0)],
         ("s1", "a"): [("s3", 1.0)], ("s1", "b"): [("s0", 0.7), ("s3", 0.3)],
         ("s2", "a"): [("s3", 0.3), ("s0", 0.7)], ("s3", "a"): [("s0", 1.0)]},
        {"s0": ["pi"]},
        {("s0", "a"): 0.2, ("s0", "b"): 0.9, ("s1", "a"): 0.5, ("s1", "b"): 0.1,
         ("s2", "a"): 0.4, ("s3", "a"): 0.3},
        rmax=1.0, ap=["pi"],
    )


def truth_value(m, rep, T=None):
    """True T-cycle ACPC of the learned policy, matched by state names."""
    truth = build_product(m, rep.product.dra)
    (c,) = [c for c in accepting_mecs(truth) if c.states == rep.best.component.states] or accepting_mecs(truth)
    pol = {truth.index[k]: a for k, a in rep.named_policy().items() if truth.index[k] in c.states}
    e = entrance(truth, c)
    return evaluate_t_cycle_acpc(c, pol, T or rep.best.T, e).J, optimize_acpc(c)[1].J


def test_estimator_formulas():
    est = estimate([50, 50])
    assert est.mean() == pytest.approx([0.5, 0.5])
    assert est.variance() == pytest.approx([2500 / 1_010_000] * 2)
    est = estimate([7, 0])
    assert est.mean() == pytest.approx([1.0, 0.0])
    assert est.variance() == pytest.approx([0.0, 0.0])


def test_fair_coin_sampling():
    rng = np.random.default_rng(0)
    est = TransitionEstimate(["h", "t"])
    for x in rng.random(100_000):
        update_estimate(est, "h" if x < 0.5 else "t")
    mu = est.mean()[0]
    assert abs(mu - 0.5) < 0.01
    want = 0.25 / (est.n + 1)
    assert est.variance()[0] == pytest.approx(want, rel=0.1)


def test_successor_outside_support():
    with pytest.raises(StructureViolation):
        update_estimate(TransitionEstimate(["a"]), "b")


def test_threshold_for_case_study_constants():
    crit = KnownnessCriterion(epsilon=0.35, delta=0.1, N=54, T=10, rmax=1.0, D=5)
    assert crit.theta == pytest.approx(0.35 / 13_500)
    assert crit.theta == pytest.approx(2.593e-5, rel=1e-3)
    assert crit.k == pytest.approx(NormalDist().inv_cdf(0.9))
    assert crit.k == pytest.approx(1.2816, abs=1e-4)


def test_deterministic_transition_known_at_once():
    crit = KnownnessCriterion(0.35, 0.1, 54, 10, 1.0, 5)
    assert not is_known(estimate([0]), crit)
    assert is_known(estimate([1]), crit)


def test_worst_case_count_for_half_half():
    crit = KnownnessCriterion(0.35, 0.1, 54, 10, 1.0, 5, k=1.645)
    bound = crit.k / (4 * crit.theta) - 1
    n = 2
    while not is_known(estimate([n // 2, n // 2]), crit):
        n += 2
    assert n >= bound > n - 2
    assert abs(n - 15_860) <= 5


def test_unobserved_successor_blocks_knownness():
    crit = KnownnessCriterion(0.35, 0.1, 1, 1, 1.0, 1, relax=1e9)
    assert not is_known(estimate([10, 0]), crit)
    assert is_known(estimate([10, 1]), crit)


@pytest.mark.parametrize("kw", [dict(delta=0.0), dict(delta=1.0), dict(epsilon=0.0), dict(D=0)])
def test_criterion_rejects_bad_parameters(kw):
    args = dict(epsilon=0.35, delta=0.1, N=4, T=1, rmax=1.0, D=2)
    args.update(kw)
    with pytest.raises(ValueError):
        KnownnessCriterion(**args)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 50), st.integers(1, 50), st.integers(1, 20))
def test_variance_shrinks_with_samples(c, extra, k):
    n = c + extra
    small = estimate([c, n - c]).variance()[0]
    big = estimate([c * k, (n - c) * k]).variance()[0]
    assert big <= small + 1e-15
    assert small <= 1 / (4 * (n + 1)) + 1e-15


def test_cost_change_is_an_error():
    m = four_state()
    book = ModelBook(structure_of(m))
    book.observe("s0", "a", "s1", 0.2)
    with pytest.raises(ModelError, match="cost"):
        book.observe("s0", "a", "s2", 0.3)


def test_one_state_component_known_after_one_step():
    m = make_mdp(["a"], "a", {("a", "x"): [("a", 1.0)]}, {"a": ["pi"]}, {("a", "x"): 0.5}, ap=["pi"])
    p = build_product(structural_mdp(structure_of(m)), universal_dra())
    (c,) = accepting_mecs(p)
    walker = ProductWalker(Simulator(m, 0), p, ModelBook(structure_of(m)))
    res = explore_amec(walker, c, KnownnessCriterion(0.35, 0.1, 1, 1, 1.0, 1), budget=10)
    assert res.complete and res.steps == 1


def test_exploration_budget_is_reported():
    m = four_state()
    p = build_product(structural_mdp(structure_of(m)), GF)
    (c,) = accepting_mecs(p)
    walker = ProductWalker(Simulator(m, 0), p, ModelBook(structure_of(m)))
    res = explore_amec(walker, c, KnownnessCriterion(0.35, 0.1, 4, 10, 1.0, 3), budget=50)
    assert not res.complete and res.unknown and res.steps == 50
    fracs = [f for _, _, f in res.progress]
    assert fracs == sorted(fracs)
    with pytest.raises(BudgetExhausted):
        model_learning_and_policy_finding(Simulator(m, 0), m, GF, 0.35, 0.1, budget=100)


def test_learned_structure_and_components_match_truth():
    m = four_state()
    rep = model_learning_and_policy_finding(Simulator(m, 1), structure_of(m), GF, 0.35, 0.1)
    learned = rep.learned.mdp
    assert structure_of(learned).relation == structure_of(m).relation
    assert learned.cost == m.cost
    truth = build_product(m, GF)
    got = {frozenset(rep.product.states[i] for i in c.states) for c in accepting_mecs(rep.product)}
    want = {frozenset(truth.states[i] for i in c.states) for c in accepting_mecs(truth)}
    assert got == want


def test_small_instance_meets_three_epsilon():
    m = four_state()
    for seed in range(5):
        rep = model_learning_and_policy_finding(Simulator(m, seed), m, GF, 0.35, 0.1)
        JT, Jstar = truth_value(m, rep)
        assert JT - Jstar < 3 * 0.35


def test_known_model_pass_through():
    # deterministic rows are learned exactly, so a huge threshold reproduces
    # known-model synthesis
    m = make_mdp(
        ["s0", "s1", "s2"], "s0",
        {("s0", "a"): [("s1", 1.0)], ("s0", "b"): [("s2", 1.0)],
         ("s1", "a"): [("s0", 1.0)], ("s2", "a"): [("s0", 1.0)], ("s2", "b"): [("s1", 1.0)]},
        {"s0": ["pi"]},
        {("s0", "a"): 0.5, ("s0", "b"): 0.1, ("s1", "a"): 0.6, ("s2", "a"): 0.2, ("s2", "b"): 0.05},
        ap=["pi"],
    )
    rep = model_learning_and_policy_finding(Simulator(m, 0), m, GF, 0.35, 0.1, T=3, relax=1e9)
    syn = synthesize(m, GF, horizon=3)
    assert rep.named_policy() == {syn.product.states[i]: a for i, a in syn.policy.items()}
    assert rep.best.J == pytest.approx(syn.J)


def test_cheaper_component_is_selected():
    m = make_mdp(
        ["s", "a0", "a1", "b0"], "s",
        {("s", "toA"): [("a0", 1.0)], ("s", "toB"): [("b0", 1.0)],
         ("a0", "x"): [("a1", 0.5), ("a0", 0.5)], ("a1", "x"): [("a0", 1.0)],
         ("b0", "x"): [("b0", 1.0)]},
        {"a0": ["pi"], "b0": ["pi"]},
        {("s", "toA"): 0.0, ("s", "toB"): 0.0, ("a0", "x"): 1.0, ("a1", "x"): 0.0,
         ("b0", "x"): 2.0},
        ap=["pi"],
    )
    truth = build_product(m, GF)
    comps = accepting_mecs(truth)
    exact = sorted(optimize_acpc(c)[1].J for c in comps)
    assert exact == pytest.approx([1.0, 2.0])
    rep = model_learning_and_policy_finding(Simulator(m, 3), m, GF, 0.35, 0.1, T=1)
    chosen = {rep.product.states[i][0] for i in rep.best.component.states}
    assert chosen == {"a0", "a1"}
    assert len(rep.components) == 2


def test_one_sided_coverage_of_the_critical_value():
    """k is the one-sided 1-delta quantile: mu - p <= k*sigma about 90% of the time."""
    m = four_state()
    crit_delta = 0.1
    hits = total = 0
    for seed in range(100):
        rep = model_learning_and_policy_finding(Simulator(m, seed), m, GF, 0.35, crit_delta, T=1)
        est = rep.learned.estimates[("s0", "a")]
        k = NormalDist().inv_cdf(1 - crit_delta)
        mu = est.mean()[est.support.index("s1")]
        sigma = float(np.sqrt(est.variance()[est.support.index("s1")]))
        hits += mu - 0.3 <= k * sigma
        total += 1
    se = np.sqrt(0.1 * 0.9 / total)
    assert hits / total >= 1 - crit_delta - 3 * se


@pytest.mark.xfail(
    strict=True,
    reason="the variance test sigma^2*k <= theta bounds the spread of the estimate "
    "by sqrt(theta/k), which is far above theta, so |P - P_hat| <= theta is rare",
)
def test_known_model_is_theta_approximation():
    m = four_state()
    ok = 0
    runs = 20
    for seed in range(runs):
        rep = model_learning_and_policy_finding(Simulator(m, seed), m, GF, 0.35, 0.1, T=1)
        theta = rep.best.theta
        dev = max(
            abs(p - dict(m.transitions[key])[t])
            for key, est in rep.learned.estimates.items()
            for t, p in zip(est.support, est.mean())
        )
        ok += dev <= theta
    assert ok / runs >= 0.9
