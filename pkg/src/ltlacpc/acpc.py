"""Average cost per cycle inside an end component.

A cycle completes each time the chain *enters* a marker state; starting in
a marker does not count. Infinite-horizon values use the renewal-reward
ratio of the stationary distribution, finite ``T``-cycle values use exact
first-passage costs between marker visits.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping

import networkx as nx
import numpy as np

from .errors import AssumptionViolation, DivergentACPC, ModelError
from .graph import EndComponent

DENSE_LIMIT = 2000
IMPROVE_TOL = 1e-10


@dataclass
class AcpcValue:
    J: float
    horizon: int | None = None  # None = infinite
    stationary: np.ndarray | None = None
    bias: np.ndarray | None = None
    history: list[float] = field(default_factory=list)
    method: str = "exact"


class MixingCapExceeded(RuntimeError):
    def __init__(self, cap, gaps):
        super().__init__(f"no mixing cycle found below cap {cap}")
        self.gaps = gaps


@dataclass(frozen=True)
class _Chain:
    order: list[int]
    pos: dict[int, int]
    P: np.ndarray
    c: np.ndarray
    m: np.ndarray


def _chain(comp: EndComponent, policy: Mapping[int, str]) -> _Chain:
    order = comp.ordered()
    pos = {s: k for k, s in enumerate(order)}
    n = len(order)
    P = np.zeros((n, n))
    c = np.zeros(n)
    p = comp.product
    for s in order:
        a = policy.get(s)
        if a not in comp.actions[s]:
            raise ModelError(f"policy picks {a!r} outside the component at state {s}")
        for t, prob in p.succ[(s, a)]:
            P[pos[s], pos[t]] += prob
        c[pos[s]] = p.cost[(s, a)]
    m = np.array([1.0 if s in comp.product.markers else 0.0 for s in order])
    return _Chain(order, pos, P, c, m)


def recurrent_classes(P: np.ndarray) -> list[list[int]]:
    g = nx.DiGraph()
    g.add_nodes_from(range(len(P)))
    rows, cols = np.nonzero(P > 0)
    g.add_edges_from(zip(rows.tolist(), cols.tolist()))
    cond = nx.condensation(g)
    return [
        sorted(cond.nodes[k]["members"]) for k in cond.nodes if cond.out_degree(k) == 0
    ]


def _stationary(P: np.ndarray) -> np.ndarray:
    n = len(P)
    if n <= DENSE_LIMIT:
        A = P.T - np.eye(n)
        A[-1, :] = 1.0
        b = np.zeros(n)
        b[-1] = 1.0
        return np.linalg.solve(A, b)
    rho = np.full(n, 1.0 / n)
    for _ in range(1_000_000):
        nxt = 0.5 * (rho + rho @ P)  # lazy chain: same fixpoint, aperiodic
        if np.abs(nxt - rho).max() < 1e-12:
            return nxt
        rho = nxt
    return rho


def _unichain(ch: _Chain, comp: EndComponent) -> list[int]:
    classes = recurrent_classes(ch.P)
    if len(classes) > 1:
        raise AssumptionViolation(
            4, f"policy induces {len(classes)} recurrent classes",
            [[ch.order[k] for k in cl] for cl in classes],
        )
    (rec,) = classes
    if not any(ch.m[k] for k in rec):
        raise DivergentACPC("no marker state in the recurrent class: cycles never complete")
    return rec


def evaluate_acpc(comp: EndComponent, policy: Mapping[int, str]) -> AcpcValue:
    ch = _chain(comp, policy)
    _unichain(ch, comp)
    rho = _stationary(ch.P)
    J = float(rho @ ch.c / (rho @ ch.m))
    return AcpcValue(J=J, stationary=rho)


def _gain_bias(ch: _Chain, ref: int) -> tuple[float, np.ndarray]:
    """Solve h + J*m - P h = c with h[ref] = 0 (J takes h[ref]'s slot)."""
    n = len(ch.c)
    M = np.eye(n) - ch.P
    M[:, ref] = ch.m
    x = np.linalg.solve(M, ch.c)
    J = float(x[ref])
    h = x.copy()
    h[ref] = 0.0
    return J, h


def _attract(comp: EndComponent, policy: dict[int, str], core: set[int]) -> dict[int, str]:
    """Keep ``policy`` on ``core`` and steer every other state into it."""
    p = comp.product
    out = {s: policy[s] for s in core}
    reached = set(core)
    while len(reached) < len(comp):
        new = {}
        for s in comp.ordered():
            if s in reached:
                continue
            for a in comp.actions[s]:
                if any(t in reached for t, prob in p.succ[(s, a)] if prob > 0):
                    new[s] = a
                    break
        if not new:
            raise DivergentACPC("component is not communicating")
        out.update(new)
        reached.update(new)
    return out


def _unichain_repair(comp: EndComponent, policy: dict[int, str]) -> tuple[dict[int, str], list[int]]:
    """Reduce a multichain policy to a unichain one by keeping the recurrent
    class with the lowest cost per cycle and attracting the rest to it."""
    ch = _chain(comp, policy)
    classes = recurrent_classes(ch.P)
    scored = []
    for cl in classes:
        if not any(ch.m[k] for k in cl):
            continue
        sub = ch.P[np.ix_(cl, cl)]
        rho = _stationary(sub)
        scored.append((float(rho @ ch.c[cl] / (rho @ ch.m[cl])), cl[0], cl))
    if not scored:
        raise DivergentACPC("no recurrent class contains a marker state")
    if len(classes) == 1:
        return policy, classes[0]
    _, _, best = min(scored)
    core = {ch.order[k] for k in best}
    return _attract(comp, policy, core), best


def optimize_acpc(comp: EndComponent) -> tuple[dict[int, str], AcpcValue]:
    """Policy iteration on the cycle-reset Bellman equation.

    Improvement steps that produce several recurrent classes are reduced to
    the best class (every class of the improved policy costs at most the
    incumbent's J per cycle), so J never increases.
    """
    if not comp.markers:
        raise DivergentACPC("component contains no marker state")
    p = comp.product
    policy = {s: comp.actions[s][0] for s in comp.ordered()}
    try:
        policy, rec = _unichain_repair(comp, policy)
    except DivergentACPC:
        policy, rec = _unichain_repair(comp, _attract(comp, policy, set(comp.markers)))
    ch = _chain(comp, policy)
    guard = min(math.prod(len(comp.actions[s]) for s in comp.ordered()) + 1, 10_000)
    history = []
    seen = set()
    for _ in range(guard):
        ref = next(k for k in rec if ch.m[k])
        J, h = _gain_bias(ch, ref)
        history.append(J)
        key = tuple(policy[s] for s in ch.order)
        if key in seen:
            break
        seen.add(key)
        changed = False
        for s in ch.order:
            def score(a):
                return p.cost[(s, a)] + sum(prob * h[ch.pos[t]] for t, prob in p.succ[(s, a)])

            best_a, best = policy[s], score(policy[s])
            for a in comp.actions[s]:
                v = score(a)
                if v < best - IMPROVE_TOL:
                    best_a, best = a, v
            if best_a != policy[s]:
                policy[s] = best_a
                changed = True
        if not changed:
            break
        policy, rec = _unichain_repair(comp, policy)
        ch = _chain(comp, policy)
    else:
        raise RuntimeError("policy iteration did not converge")
    val = evaluate_acpc(comp, policy)
    val.bias = h
    val.history = history
    return policy, val


def _first_passage(ch: _Chain):
    n = len(ch.c)
    A = np.eye(n) - ch.P * (1.0 - ch.m)[None, :]
    try:
        g = np.linalg.solve(A, ch.c)
        H = np.linalg.solve(A, ch.P * ch.m[None, :])
    except np.linalg.LinAlgError:
        raise DivergentACPC("marker set unreachable from some state under this policy") from None
    if not np.all(np.isfinite(g)) or np.abs(H.sum(axis=1) - 1).max() > 1e-6:
        raise DivergentACPC("marker set unreachable from some state under this policy")
    return g, H


def t_cycle_curve(comp: EndComponent, policy: Mapping[int, str], start: int, T: int) -> np.ndarray:
    """``J^{f,k}(start)`` for ``k = 1..T``."""
    ch = _chain(comp, policy)
    g, H = _first_passage(ch)
    v = np.zeros(len(g))
    v[ch.pos[start]] = 1.0
    out = np.empty(T)
    total = 0.0
    for k in range(T):
        total += v @ g
        out[k] = total / (k + 1)
        v = v @ H
    return out


def evaluate_t_cycle_acpc(
    comp: EndComponent, policy: Mapping[int, str], T: int, start: int
) -> AcpcValue:
    if T < 1:
        raise ValueError("T must be a positive number of cycles")
    if start not in comp.states:
        raise ModelError(f"start state {start} is not in the component")
    return AcpcValue(J=float(t_cycle_curve(comp, policy, start, T)[-1]), horizon=T)


def _policy_space(comp: EndComponent) -> int:
    return math.prod(len(comp.actions[s]) for s in comp.ordered())


def optimize_t_cycle(
    comp: EndComponent, T: int, start: int, max_policies: int = 10**6
) -> tuple[dict[int, str], AcpcValue]:
    """Best memoryless policy for the ``T``-cycle objective.

    Small components are enumerated exhaustively (lowest policy index wins
    ties). Larger ones start from the infinite-horizon optimum and apply
    single-state improvements until none helps; the result is flagged
    ``method="heuristic"``.
    """
    order = comp.ordered()
    if _policy_space(comp) <= max_policies:
        best, best_pol = math.inf, None
        for choice in itertools.product(*(comp.actions[s] for s in order)):
            pol = dict(zip(order, choice))
            try:
                v = evaluate_t_cycle_acpc(comp, pol, T, start).J
            except DivergentACPC:
                continue
            if v < best - 1e-12:
                best, best_pol = v, pol
        if best_pol is None:
            raise DivergentACPC("no policy completes cycles")
        return best_pol, AcpcValue(J=best, horizon=T, method="exhaustive")
    pol, _ = optimize_acpc(comp)
    pol = dict(pol)
    best = evaluate_t_cycle_acpc(comp, pol, T, start).J
    improved = True
    while improved:
        improved = False
        for s in order:
            for a in comp.actions[s]:
                if a == pol[s]:
                    continue
                trial = dict(pol)
                trial[s] = a
                try:
                    v = evaluate_t_cycle_acpc(comp, trial, T, start).J
                except DivergentACPC:
                    continue
                if v < best - 1e-12:
                    pol, best, improved = trial, v, True
    return pol, AcpcValue(J=best, horizon=T, method="heuristic")


def estimate_mixing_cycle(
    comp: EndComponent,
    policy: Mapping[int, str],
    eps: float,
    start: int,
    cap: int = 10**5,
) -> int:
    """Smallest ``T`` with ``J^{g,T}(start) - J^g < eps``.

    The gap is not monotone in ``T`` in general, so every ``T`` is checked in
    order; one step of the embedded marker chain per ``T`` keeps this cheap.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    J = evaluate_acpc(comp, policy).J
    ch = _chain(comp, policy)
    g, H = _first_passage(ch)
    v = np.zeros(len(g))
    v[ch.pos[start]] = 1.0
    total = 0.0
    gaps = {}
    for T in range(1, cap + 1):
        total += v @ g
        gap = total / T - J
        if gap < eps:
            return T
        if T & (T - 1) == 0:
            gaps[T] = gap
        v = v @ H
    raise MixingCapExceeded(cap, gaps)


def assemble_policy(
    product, f_reach: Mapping[int, str], f_cycle: Mapping[int, str], comp: EndComponent
) -> dict[int, str]:
    """Reach ``comp`` with ``f_reach`` and cycle inside it with ``f_cycle``."""
    policy = {}
    seen = {product.initial}
    stack = [product.initial]
    while stack:
        s = stack.pop()
        if s in comp.states:
            a = f_cycle.get(s)
        else:
            a = f_reach.get(s)
        if a is None:
            raise ModelError(f"assembled policy does not cover reachable state {s}")
        policy[s] = a
        for t, prob in product.succ[(s, a)]:
            if prob > 0 and t not in seen:
                seen.add(t)
                stack.append(t)
    for s in comp.states:
        policy.setdefault(s, f_cycle[s])
    return policy
