"""End components, accepting MECs, reachability and the structural checks
the learner relies on (bounded marker cycles, unique entrance)."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Mapping

import networkx as nx
import numpy as np

from .errors import AssumptionViolation
from .product import ProductMDP

VI_TOL = 1e-10


@dataclass(frozen=True)
class EndComponent:
    product: ProductMDP
    states: frozenset[int]
    actions: Mapping[int, tuple[str, ...]]
    pair: int | None = None

    @property
    def accepting_states(self) -> frozenset[int]:
        if self.pair is None:
            return frozenset()
        return self.states & self.product.pairs[self.pair][1]

    @property
    def markers(self) -> frozenset[int]:
        return self.states & self.product.markers

    @property
    def accepting(self) -> bool:
        if self.pair is None:
            return False
        L, K = self.product.pairs[self.pair]
        return bool(self.states & K) and not (self.states & L)

    def ordered(self) -> list[int]:
        return sorted(self.states)

    def with_product(self, product: ProductMDP) -> "EndComponent":
        """Same component over a structurally identical product."""
        return EndComponent(product, self.states, self.actions, self.pair)

    def __len__(self):
        return len(self.states)


@dataclass(frozen=True)
class ReachabilityResult:
    values: np.ndarray
    policy: dict[int, str]
    iterations: int


def _edges(p: ProductMDP, states, actions):
    g = nx.DiGraph()
    g.add_nodes_from(states)
    for s in states:
        for a in actions[s]:
            for t, prob in p.succ[(s, a)]:
                if prob > 0:
                    g.add_edge(s, t)
    return g


def _stay_actions(p: ProductMDP, s: int, inside, allowed=None) -> tuple[str, ...]:
    acts = p.enabled[s] if allowed is None else allowed
    return tuple(
        a for a in acts if all(t in inside for t, prob in p.succ[(s, a)] if prob > 0)
    )


def mec_decomposition(p: ProductMDP, candidates: Iterable[int] | None = None) -> list[EndComponent]:
    """Maximal end components of ``p`` restricted to ``candidates``."""
    cand = frozenset(range(len(p)) if candidates is None else candidates)
    result = []
    stack = [cand]
    while stack:
        S = set(stack.pop())
        # drop states that cannot stay inside S
        changed = True
        acts = {}
        while changed:
            changed = False
            acts = {s: _stay_actions(p, s, S) for s in S}
            dead = [s for s, a in acts.items() if not a]
            if dead:
                S.difference_update(dead)
                changed = True
        if not S:
            continue
        sccs = [frozenset(c) for c in nx.strongly_connected_components(_edges(p, S, acts))]
        if len(sccs) == 1:
            result.append(EndComponent(p, frozenset(S), {s: acts[s] for s in S}))
        else:
            stack.extend(sccs)
    result.sort(key=lambda c: min(c.states))
    return result


def maximal_end_components(p: ProductMDP) -> list[EndComponent]:
    return mec_decomposition(p)


def accepting_mecs(p: ProductMDP) -> list[EndComponent]:
    out = []
    for i, (L, K) in enumerate(p.pairs):
        allowed = [s for s in range(len(p)) if s not in L]
        for c in mec_decomposition(p, allowed):
            if c.states & K:
                out.append(EndComponent(p, c.states, c.actions, i))
    return out


def is_communicating(c: EndComponent) -> bool:
    g = _edges(c.product, c.states, c.actions)
    return nx.is_strongly_connected(g) if len(g) else False


def _acts(p: ProductMDP, allowed, s: int):
    if allowed is None:
        return p.enabled[s]
    return allowed.get(s, ())


def _prob0(p: ProductMDP, target: frozenset[int], allowed=None) -> set[int]:
    pred = {s: set() for s in range(len(p))}
    for s in range(len(p)):
        for a in _acts(p, allowed, s):
            for t, prob in p.succ[(s, a)]:
                if prob > 0:
                    pred[t].add(s)
    can = set(target)
    queue = deque(target)
    while queue:
        t = queue.popleft()
        for s in pred[t]:
            if s not in can:
                can.add(s)
                queue.append(s)
    return set(range(len(p))) - can


def _prob1(p: ProductMDP, target: frozenset[int], allowed=None) -> set[int]:
    U = set(range(len(p))) - _prob0(p, target, allowed)
    while True:
        R = set(target)
        grew = True
        while grew:
            grew = False
            for s in U - R:
                for a in _acts(p, allowed, s):
                    row = [t for t, prob in p.succ[(s, a)] if prob > 0]
                    if all(t in U for t in row) and any(t in R for t in row):
                        R.add(s)
                        grew = True
                        break
        if R == U:
            return U
        U = R


def max_reach_probability(
    p: ProductMDP, target: Iterable[int], allowed: Mapping[int, tuple[str, ...]] | None = None
) -> ReachabilityResult:
    """Maximal probability of reaching ``target`` plus a memoryless policy
    outside the target. Probability-0/1 states are decided on the graph.

    ``allowed`` optionally restricts the actions per state (states missing
    from it have none).
    """
    target = frozenset(target)
    if not target:
        raise ValueError("target set is empty")
    n = len(p)
    zero = _prob0(p, target, allowed)
    one = _prob1(p, target, allowed)
    v = np.zeros(n)
    v[list(one)] = 1.0
    rest = [s for s in range(n) if s not in zero and s not in one]
    it = 0
    while rest:
        it += 1
        delta = 0.0
        for s in rest:
            best = max(sum(prob * v[t] for t, prob in p.succ[(s, a)]) for a in _acts(p, allowed, s))
            delta = max(delta, abs(best - v[s]))
            v[s] = best
        if delta < VI_TOL:
            break

    def q(s, a):
        return sum(prob * v[t] for t, prob in p.succ[(s, a)])

    optimal = {}
    for s in range(n):
        if s in target or v[s] <= 0:
            continue
        if s in one:
            optimal[s] = [
                a for a in _acts(p, allowed, s)
                if all(t in one for t, prob in p.succ[(s, a)] if prob > 0)
            ]
        else:
            optimal[s] = [a for a in _acts(p, allowed, s) if q(s, a) >= v[s] - 1e-9]
    # progress ranks: among optimal actions (lowest index first) pick one that
    # moves strictly closer to the target
    rank = {s: 0 for s in target}
    policy = {}
    frontier = True
    level = 0
    while frontier:
        level += 1
        frontier = False
        for s in sorted(optimal):
            if s in rank:
                continue
            for a in optimal[s]:
                if any(t in rank and rank[t] < level for t, prob in p.succ[(s, a)] if prob > 0):
                    policy[s] = a
                    rank[s] = level
                    frontier = True
                    break
    return ReachabilityResult(v, policy, it)


def entrance(p: ProductMDP, c: EndComponent) -> int:
    """Unique first state of ``c`` hit by probability-1 reaching policies."""
    if p.initial in c.states:
        cand = {p.initial}
    else:
        one = _prob1(p, c.states)
        if p.initial not in one:
            raise AssumptionViolation(3, "component is not reachable with probability 1")
        # states visited by some probability-1 policy before entering c
        seen = {p.initial}
        queue = deque([p.initial])
        cand = set()
        while queue:
            s = queue.popleft()
            for a in p.enabled[s]:
                row = [t for t, prob in p.succ[(s, a)] if prob > 0]
                if not all(t in one for t in row):
                    continue
                for t in row:
                    if t in c.states:
                        cand.add(t)
                    elif t not in seen:
                        seen.add(t)
                        queue.append(t)
    if len(cand) != 1:
        raise AssumptionViolation(3, f"{len(cand)} entrance candidates", sorted(cand))
    (e,) = cand
    if e not in p.markers:
        raise AssumptionViolation(3, "entrance does not carry the cycle marker", [e])
    return e


def compute_cycle_bound(c: EndComponent) -> int:
    """Longest number of steps from a marker state back to the marker set
    inside ``c``; requires every cycle of ``c`` to pass through a marker."""
    p = c.product
    markers = c.markers
    if not markers:
        raise AssumptionViolation(2, "component has no marker state")
    g = nx.DiGraph()
    for s in c.states:
        src = ("out", s) if s in markers else s
        g.add_node(src)
        for a in c.actions[s]:
            for t, prob in p.succ[(s, a)]:
                if prob > 0:
                    g.add_edge(src, ("in", t) if t in markers else t)
    try:
        cyc = nx.find_cycle(g)
    except nx.NetworkXNoCycle:
        cyc = None
    if cyc:
        raise AssumptionViolation(2, "cycle avoiding every marker state", [u for u, _ in cyc])
    dist = {}
    for node in nx.topological_sort(g):
        if isinstance(node, tuple) and node[0] == "out":
            base = 0
        else:
            preds = [dist[u] + 1 for u in g.predecessors(node) if dist.get(u) is not None]
            base = max(preds) if preds else None
        dist[node] = base
    ends = [d for node, d in dist.items() if isinstance(node, tuple) and node[0] == "in" and d]
    if not ends:
        raise AssumptionViolation(2, "no marker-to-marker path")
    return max(ends)
