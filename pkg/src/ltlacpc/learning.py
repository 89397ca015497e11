"""PAC-style model learning inside accepting end components followed by
T-cycle policy synthesis on the learned model.

Counts are kept on base-MDP transitions ``(s, a, s')``; a product state is
known when every retained action of it is known, because product
probabilities are copied from the base model.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Mapping

import numpy as np

from .acpc import AcpcValue, assemble_policy, estimate_mixing_cycle, optimize_acpc, optimize_t_cycle
from .automata import DRA
from .errors import BudgetExhausted, ModelError, StructureViolation
from .graph import (
    EndComponent,
    accepting_mecs,
    compute_cycle_bound,
    entrance,
    max_reach_probability,
)
from .mdp import LabeledMDP, TransitionSystem, structure_of
from .product import ProductMDP, build_product
from .simulation import Simulator

RECOMPUTE_EVERY = 500


class TransitionEstimate:
    """Visit counts for one ``(s, a)`` with ML mean and variance."""

    def __init__(self, support):
        self.support = tuple(support)
        self._pos = {t: k for k, t in enumerate(self.support)}
        self.counts = np.zeros(len(self.support), dtype=np.int64)
        self.n = 0

    def update(self, succ: str) -> "TransitionEstimate":
        k = self._pos.get(succ)
        if k is None:
            raise StructureViolation(f"observed successor {succ!r} outside the declared support")
        self.counts[k] += 1
        self.n += 1
        return self

    def mean(self) -> np.ndarray:
        if self.n == 0:
            return np.zeros(len(self.support))
        return self.counts / self.n

    def variance(self) -> np.ndarray:
        n = self.n
        if n == 0:
            return np.full(len(self.support), np.inf)
        c = self.counts
        return c * (n - c) / (n * n * (n + 1.0))

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.support, self.mean().tolist()))


def update_estimate(est: TransitionEstimate, succ: str) -> TransitionEstimate:
    return est.update(succ)


@dataclass(frozen=True)
class KnownnessCriterion:
    epsilon: float
    delta: float
    N: int
    T: int
    rmax: float
    D: int
    k: float | None = None
    relax: float = 1.0  # multiplies the threshold (1 = untightened)

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.epsilon <= 0 or self.rmax <= 0 or min(self.N, self.T, self.D) < 1:
            raise ValueError("epsilon, rmax must be positive and N, T, D at least 1")
        if self.k is None:
            object.__setattr__(self, "k", NormalDist().inv_cdf(1 - self.delta))

    @property
    def theta(self) -> float:
        return self.relax * self.epsilon / (self.N * self.T * self.rmax * self.D ** 2)


def is_known(est: TransitionEstimate, crit: KnownnessCriterion) -> bool:
    """Every support successor observed and ``sigma^2 k <= theta`` for all."""
    if est.n == 0 or not np.all(est.counts > 0):
        return False
    return float(est.variance().max()) * crit.k <= crit.theta


@dataclass
class LearnedModel:
    mdp: LabeledMDP
    known: dict[tuple[str, str], bool]
    estimates: dict[tuple[str, str], TransitionEstimate]
    costs: dict[tuple[str, str], float]


class ModelBook:
    """Estimates and observed costs for every ``(s, a)`` of a structure."""

    def __init__(self, ts: TransitionSystem):
        self.ts = ts
        post: dict[tuple[str, str], list[str]] = {}
        for s, a, t in sorted(ts.relation, key=lambda r: (ts.states.index(r[0]), r[1], ts.states.index(r[2]))):
            post.setdefault((s, a), []).append(t)
        self.post = post
        self.estimates = {k: TransitionEstimate(v) for k, v in post.items()}
        self.costs: dict[tuple[str, str], float] = {}

    def observe(self, s: str, a: str, t: str, cost: float) -> None:
        est = self.estimates.get((s, a))
        if est is None:
            raise StructureViolation(f"action {a!r} at {s!r} is not in the declared structure")
        est.update(t)
        old = self.costs.setdefault((s, a), cost)
        if old != cost:
            raise ModelError(f"cost of ({s}, {a}) changed between observations: {old} vs {cost}")

    def learned(self, crit: KnownnessCriterion | None = None, smoothed: bool = False) -> LearnedModel:
        """ML model; unobserved rows are uniform over their support.
        ``smoothed`` adds one pseudo-count per successor (guidance only)."""
        trans, known = {}, {}
        for key, est in self.estimates.items():
            m = len(est.support)
            if smoothed:
                probs = (est.counts + 1.0) / (est.n + m)
            elif est.n:
                probs = est.mean()
            else:
                probs = np.full(m, 1.0 / m)
            trans[key] = tuple(zip(est.support, probs.tolist()))
            known[key] = bool(crit is not None and is_known(est, crit))
        cost = {k: self.costs.get(k, 0.0) for k in trans}
        ts = self.ts
        mdp = LabeledMDP(
            ts.states, ts.initial, ts.actions, trans, dict(ts.labels), cost,
            max(cost.values(), default=0.0), ts.ap,
        )
        return LearnedModel(mdp, known, self.estimates, dict(self.costs))


def structural_mdp(ts: TransitionSystem) -> LabeledMDP:
    """Uniform probabilities over the support and zero costs."""
    return ModelBook(ts).learned().mdp


class ProductWalker:
    """Drives a base simulator while tracking the automaton state."""

    def __init__(self, sim: Simulator, product: ProductMDP, book: ModelBook):
        self.sim = sim
        self.product = product
        self.book = book
        self.restart()

    def restart(self) -> int:
        self.sim.reset()
        self.q = self.product.dra.initial
        self.index = self.product.index[(self.sim.state, self.q)]
        return self.index

    def step(self, action: str):
        s = self.sim.state
        r = self.sim.step(action)
        self.book.observe(s, action, r.state, r.cost)
        self.q = self.product.dra.step(self.q, self.product.mdp.label(s))
        key = (r.state, self.q)
        if key not in self.product.index:
            raise StructureViolation(f"product state {key} outside the structural product")
        self.index = self.product.index[key]
        return r


@dataclass
class ExplorationResult:
    steps: int
    cycles: int
    complete: bool
    unknown: list[int]
    progress: list[tuple[int, int, float]] = field(default_factory=list)


def explore_amec(
    walker: ProductWalker,
    comp: EndComponent,
    crit: KnownnessCriterion,
    budget: int,
    recompute_every: int = RECOMPUTE_EVERY,
) -> ExplorationResult:
    """Round-robin at unknown states, head for the unknown set elsewhere,
    until every state of ``comp`` is known or ``budget`` steps are used."""
    p = walker.product
    book = walker.book
    if walker.index not in comp.states:
        raise ModelError("walker is not inside the component to explore")
    pair_states: dict[tuple[str, str], list[int]] = {}
    for j in comp.states:
        s = p.states[j][0]
        for a in comp.actions[j]:
            pair_states.setdefault((s, a), []).append(j)
    known_pairs = {k for k in pair_states if is_known(book.estimates[k], crit)}

    def state_known(j):
        s = p.states[j][0]
        return all((s, a) in known_pairs for a in comp.actions[j])

    unknown = {j for j in comp.states if not state_known(j)}
    rr = {j: 0 for j in comp.states}
    guide: dict[int, str] = {}
    progress = [(0, 0, 1 - len(unknown) / len(comp))]
    steps = cycles = 0
    while unknown and steps < budget:
        if steps % recompute_every == 0:
            guide_p = p.with_probabilities(book.learned(smoothed=True).mdp)
            guide = max_reach_probability(guide_p, unknown, allowed=comp.actions).policy
        i = walker.index
        if i in unknown or i not in guide:
            acts = comp.actions[i]
            a = acts[rr[i] % len(acts)]
            rr[i] += 1
        else:
            a = guide[i]
        s = p.states[i][0]
        r = walker.step(a)
        steps += 1
        cycles += r.cycle
        key = (s, a)
        if key not in known_pairs and is_known(book.estimates[key], crit):
            known_pairs.add(key)
            for j in pair_states[key]:
                if j in unknown and state_known(j):
                    unknown.discard(j)
        if steps % recompute_every == 0:
            progress.append((steps, cycles, 1 - len(unknown) / len(comp)))
    if progress[-1][0] != steps:
        progress.append((steps, cycles, 1 - len(unknown) / len(comp)))
    return ExplorationResult(steps, cycles, not unknown, sorted(unknown), progress)


@dataclass
class ComponentReport:
    component: EndComponent
    D: int
    entrance: int
    theta: float
    T: int
    J: float
    f_reach: dict[int, str]
    f_cycle: dict[int, str]
    exploration: list[ExplorationResult]


@dataclass
class LearningReport:
    policy: dict[int, str]
    product: ProductMDP
    learned: LearnedModel
    components: list[ComponentReport]
    chosen: int
    steps: int
    cycles: int
    wall_time: float
    value: AcpcValue

    @property
    def best(self) -> ComponentReport:
        return self.components[self.chosen]

    def named_policy(self) -> dict[tuple[str, str], str]:
        """Policy keyed by ``(mdp_state, dra_state)``, independent of indexing."""
        return {self.product.states[i]: a for i, a in self.policy.items()}


def _drive(walker: ProductWalker, comp: EndComponent, f_reach: Mapping[int, str], budget: int) -> int:
    walker.restart()
    n = 0
    while walker.index not in comp.states:
        if n >= budget:
            raise BudgetExhausted("budget exhausted before reaching the component")
        a = f_reach.get(walker.index)
        if a is None:
            raise ModelError(f"no reaching action at product state {walker.index}")
        walker.step(a)
        n += 1
    return n


def model_learning_and_policy_finding(
    sim: Simulator,
    structure: TransitionSystem | LabeledMDP,
    dra: DRA,
    epsilon: float,
    delta: float,
    T: int | str = "auto",
    budget: int = 10_000_000,
    pi_label: str = "pi",
    rmax: float = 1.0,
    critical_value: float | None = None,
    relax: float = 1.0,
    N: int | None = None,
    recompute_every: int = RECOMPUTE_EVERY,
) -> LearningReport:
    """Learn every accepting end component to the knownness threshold, then
    pick the component whose optimal ``T``-cycle policy is cheapest."""
    t0 = time.perf_counter()
    ts = structure if isinstance(structure, TransitionSystem) else structure_of(structure)
    book = ModelBook(ts)
    p = build_product(structural_mdp(ts), dra, pi_label)
    comps = accepting_mecs(p)
    if not comps:
        raise ModelError("no accepting end component: the specification cannot be satisfied")
    N = N or len(ts.states)
    walker = ProductWalker(sim, p, book)
    used = 0
    cycles = 0
    reports = []
    for c in comps:
        D = compute_cycle_bound(c)
        ent = entrance(p, c)
        f_reach = max_reach_probability(p, c.states).policy
        T_used = 1 if T == "auto" else int(T)
        runs = []
        for _ in range(20):
            crit = KnownnessCriterion(epsilon, delta, N, T_used, rmax, D, critical_value, relax)
            used += _drive(walker, c, f_reach, budget - used)
            res = explore_amec(walker, c, crit, budget - used, recompute_every)
            used += res.steps
            cycles += res.cycles
            runs.append(res)
            if not res.complete:
                raise BudgetExhausted(
                    f"budget of {budget} steps exhausted with {len(res.unknown)} unknown states",
                    partial=res,
                )
            if T != "auto":
                break
            lp = p.with_probabilities(book.learned(crit).mdp)
            lc = c.with_product(lp)
            g, _ = optimize_acpc(lc)
            T_est = estimate_mixing_cycle(lc, g, epsilon, ent)
            if T_est <= T_used:
                break
            T_used = T_est
        learned = book.learned(crit)
        lp = p.with_probabilities(learned.mdp)
        lc = c.with_product(lp)
        f_cycle, val = optimize_t_cycle(lc, T_used, ent)
        reports.append(
            ComponentReport(lc, D, ent, crit.theta, T_used, val.J, f_reach, f_cycle, runs)
        )
    chosen = min(range(len(reports)), key=lambda k: (reports[k].J, k))
    best = reports[chosen]
    learned = book.learned(
        KnownnessCriterion(epsilon, delta, N, best.T, rmax, best.D, critical_value, relax)
    )
    lp = p.with_probabilities(learned.mdp)
    policy = assemble_policy(lp, best.f_reach, best.f_cycle, best.component.with_product(lp))
    value = AcpcValue(J=best.J, horizon=best.T, method="learned")
    return LearningReport(
        policy, lp, learned, reports, chosen, used, cycles, time.perf_counter() - t0, value
    )
