"""Labeled MDPs with costs, their transition-system view, parallel
composition and policy-induced Markov chains.

States and actions are referred to by name at the API boundary; internally
states are indexed in declaration order and actions keep the order in which
they were first declared (this order is the tie-break order everywhere).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from functools import reduce
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ModelError

PROB_TOL = 1e-9


@dataclass(frozen=True)
class LabeledMDP:
    """Finite MDP with atomic-proposition labels and bounded costs.

    ``transitions`` maps ``(state, action)`` to a tuple of
    ``(successor, probability)`` pairs in declaration order; an action is
    available at a state iff the key exists.
    """

    states: tuple[str, ...]
    initial: str
    actions: tuple[str, ...]
    transitions: Mapping[tuple[str, str], tuple[tuple[str, float], ...]]
    labels: Mapping[str, frozenset[str]]
    cost: Mapping[tuple[str, str], float]
    rmax: float
    ap: frozenset[str] = frozenset()
    _enabled: dict = field(default=None, repr=False, compare=False)
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        enabled = {s: [] for s in self.states}
        order = {a: i for i, a in enumerate(self.actions)}
        for (s, a) in self.transitions:
            if s in enabled:
                enabled[s].append(a)
        for s in enabled:
            enabled[s] = tuple(sorted(enabled[s], key=order.__getitem__))
        object.__setattr__(self, "_enabled", enabled)
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.states)})
        if not self.ap:
            ap = frozenset().union(*self.labels.values()) if self.labels else frozenset()
            object.__setattr__(self, "ap", ap)

    @property
    def index(self) -> dict[str, int]:
        return self._index

    def enabled(self, state: str) -> tuple[str, ...]:
        return self._enabled[state]

    def successors(self, state: str, action: str) -> tuple[tuple[str, float], ...]:
        return self.transitions[(state, action)]

    def label(self, state: str) -> frozenset[str]:
        return self.labels.get(state, frozenset())

    def prob(self, state: str, action: str, succ: str) -> float:
        for t, p in self.transitions.get((state, action), ()):
            if t == succ:
                return p
        return 0.0

    def __len__(self):
        return len(self.states)


@dataclass(frozen=True)
class TransitionSystem:
    """Probability-free view: the support relation of an MDP."""

    states: tuple[str, ...]
    initial: str
    actions: tuple[str, ...]
    relation: frozenset[tuple[str, str, str]]
    labels: Mapping[str, frozenset[str]]
    ap: frozenset[str] = frozenset()

    def post(self, state: str, action: str) -> list[str]:
        return [t for (s, a, t) in sorted(self.relation) if s == state and a == action]


@dataclass(frozen=True)
class DTMC:
    states: tuple[str, ...]
    initial: str
    matrix: np.ndarray
    cost: np.ndarray
    labels: Mapping[str, frozenset[str]]


def make_mdp(
    states: Sequence[str],
    initial: str,
    transitions: Mapping[tuple[str, str], Iterable[tuple[str, float]]],
    labels: Mapping[str, Iterable[str]] | None = None,
    cost: Mapping[tuple[str, str], float] | None = None,
    rmax: float | None = None,
    actions: Sequence[str] | None = None,
    ap: Iterable[str] | None = None,
) -> LabeledMDP:
    """Convenience constructor; missing costs default to 0 and ``rmax`` to
    the largest declared cost."""
    trans = {k: tuple((t, float(p)) for t, p in v) for k, v in transitions.items()}
    if actions is None:
        seen: dict[str, None] = {}
        for (_, a) in trans:
            seen.setdefault(a, None)
        actions = tuple(seen)
    cost = {k: float(cost.get(k, 0.0)) if cost else 0.0 for k in trans}
    if rmax is None:
        rmax = max(cost.values(), default=0.0)
    labels = {s: frozenset((labels or {}).get(s, ())) for s in states}
    return LabeledMDP(
        states=tuple(states),
        initial=initial,
        actions=tuple(actions),
        transitions=trans,
        labels=labels,
        cost=cost,
        rmax=float(rmax),
        ap=frozenset(ap) if ap is not None else frozenset(),
    )


def validate(m: LabeledMDP) -> list[str]:
    """Return one diagnostic string per violated invariant (empty if none)."""
    out = []
    known = set(m.states)
    if m.initial not in known:
        out.append(f"initial state {m.initial!r} is not a declared state")
    for s in m.states:
        if not m.enabled(s):
            out.append(f"dead state {s!r}: no available action")
    for (s, a), succ in m.transitions.items():
        if s not in known:
            out.append(f"transition from undeclared state {s!r} on {a!r}")
            continue
        total = 0.0
        for t, p in succ:
            if t not in known:
                out.append(f"({s!r}, {a!r}) leads to undeclared state {t!r}")
            if p < -PROB_TOL or p > 1 + PROB_TOL:
                out.append(f"probability out of range at ({s!r}, {a!r}, {t!r}): {p}")
            total += p
        if abs(total - 1.0) > PROB_TOL:
            out.append(f"({s!r}, {a!r}) probabilities sum to {total:.12g}, not 1")
        c = m.cost.get((s, a))
        if c is None:
            out.append(f"({s!r}, {a!r}) has no cost")
        elif c < 0 or c > m.rmax + PROB_TOL:
            out.append(f"cost {c} at ({s!r}, {a!r}) outside [0, rmax={m.rmax}]")
    return out


def structure_of(m: LabeledMDP) -> TransitionSystem:
    rel = frozenset(
        (s, a, t) for (s, a), succ in m.transitions.items() for t, p in succ if p > 0
    )
    return TransitionSystem(m.states, m.initial, m.actions, rel, dict(m.labels), m.ap)


def induce_dtmc(m: LabeledMDP, policy: Mapping[str, str]) -> DTMC:
    idx = m.index
    n = len(m.states)
    P = np.zeros((n, n))
    c = np.zeros(n)
    for s in m.states:
        a = policy.get(s)
        if a is None or (s, a) not in m.transitions:
            raise ModelError(f"policy selects unavailable action {a!r} at state {s!r}")
        for t, p in m.transitions[(s, a)]:
            P[idx[s], idx[t]] += p
        c[idx[s]] = m.cost[(s, a)]
    return DTMC(m.states, m.initial, P, c, dict(m.labels))


def reachable(m: LabeledMDP, start: str | None = None) -> list[str]:
    start = m.initial if start is None else start
    seen = {start}
    order = [start]
    queue = deque([start])
    while queue:
        s = queue.popleft()
        for a in m.enabled(s):
            for t, p in m.transitions[(s, a)]:
                if p > 0 and t not in seen:
                    seen.add(t)
                    order.append(t)
                    queue.append(t)
    return order


def restrict(m: LabeledMDP, keep: Iterable[str]) -> LabeledMDP:
    """Sub-MDP on ``keep`` (declaration order preserved)."""
    keep = set(keep)
    states = tuple(s for s in m.states if s in keep)
    trans = {k: v for k, v in m.transitions.items() if k[0] in keep}
    cost = {k: m.cost[k] for k in trans}
    return LabeledMDP(
        states, m.initial, m.actions, trans, {s: m.label(s) for s in states}, cost, m.rmax, m.ap
    )


def _join(s1: str, s2: str) -> str:
    return f"{s1}|{s2}"


def parallel_compose(m1: LabeledMDP, m2: LabeledMDP) -> LabeledMDP:
    """Synchronise on shared action names, interleave private ones.

    A shared action is enabled at ``(s1, s2)`` only when both components
    enable it; probabilities multiply and costs add. Private actions move one
    component and freeze the other. Only the part reachable from the joint
    initial state is kept.
    """
    A1, A2 = set(m1.actions), set(m2.actions)
    actions = tuple(m1.actions) + tuple(a for a in m2.actions if a not in A1)
    order = {a: i for i, a in enumerate(actions)}

    def moves(s1: str, s2: str):
        out = []
        for a in sorted(set(m1.enabled(s1)) | set(m2.enabled(s2)), key=order.__getitem__):
            succ: dict[tuple[str, str], float] = {}
            if a in A1 and a in A2:
                if (s1, a) not in m1.transitions or (s2, a) not in m2.transitions:
                    continue
                for t1, p1 in m1.transitions[(s1, a)]:
                    for t2, p2 in m2.transitions[(s2, a)]:
                        succ[(t1, t2)] = succ.get((t1, t2), 0.0) + p1 * p2
                c = m1.cost[(s1, a)] + m2.cost[(s2, a)]
            elif a in A1:
                for t1, p1 in m1.transitions[(s1, a)]:
                    succ[(t1, s2)] = succ.get((t1, s2), 0.0) + p1
                c = m1.cost[(s1, a)]
            else:
                for t2, p2 in m2.transitions[(s2, a)]:
                    succ[(s1, t2)] = succ.get((s1, t2), 0.0) + p2
                c = m2.cost[(s2, a)]
            out.append((a, succ, c))
        return out

    init = (m1.initial, m2.initial)
    seen = {init}
    order_states = [init]
    queue = deque([init])
    trans, cost, labels = {}, {}, {}
    dead = []
    while queue:
        pair = queue.popleft()
        s = _join(*pair)
        labels[s] = m1.label(pair[0]) | m2.label(pair[1])
        mv = moves(*pair)
        if not mv:
            dead.append(s)
        for a, succ, c in mv:
            trans[(s, a)] = tuple((_join(*t), p) for t, p in succ.items())
            cost[(s, a)] = c
            for t in succ:
                if t not in seen:
                    seen.add(t)
                    order_states.append(t)
                    queue.append(t)
    if dead:
        raise ModelError(
            "composition has dead states (no action defined): " + ", ".join(dead)
        )
    return LabeledMDP(
        tuple(_join(*t) for t in order_states),
        _join(*init),
        actions,
        trans,
        labels,
        cost,
        m1.rmax + m2.rmax,
        m1.ap | m2.ap,
    )


def compose_all(models: Sequence[LabeledMDP]) -> LabeledMDP:
    """Left-folded binary composition."""
    return reduce(parallel_compose, models)


# -- text format -----------------------------------------------------------


def loads_mdp(text: str) -> LabeledMDP:
    """Parse the line-oriented model format (see README)."""
    states: list[str] = []
    labels: dict[str, frozenset[str]] = {}
    initial = None
    rmax = None
    trans: dict[tuple[str, str], list[tuple[str, float]]] = {}
    cost: dict[tuple[str, str], float] = {}
    actions: dict[str, None] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            kind = tok[0]
            if kind == "state":
                name = tok[1]
                lab: frozenset[str] = frozenset()
                if len(tok) >= 4 and tok[2] == "label":
                    lab = frozenset(x for x in "".join(tok[3:]).split(",") if x)
                elif len(tok) != 2:
                    raise ValueError("expected 'state <name> [label a,b]'")
                if name in labels:
                    raise ValueError(f"state {name!r} declared twice")
                states.append(name)
                labels[name] = lab
            elif kind == "initial":
                initial = tok[1]
            elif kind == "rmax":
                rmax = float(tok[1])
            elif kind == "trans":
                if len(tok) != 7 or tok[5] != "cost":
                    raise ValueError("expected 'trans <s> <a> <s'> <p> cost <c>'")
                s, a, t, p, c = tok[1], tok[2], tok[3], float(tok[4]), float(tok[6])
                actions.setdefault(a, None)
                if (s, a) in cost and cost[(s, a)] != c:
                    raise ValueError(f"cost of ({s}, {a}) differs across successors")
                cost[(s, a)] = c
                trans.setdefault((s, a), []).append((t, p))
            else:
                raise ValueError(f"unknown declaration {kind!r}")
        except (IndexError, ValueError) as exc:
            raise ModelError(f"line {lineno}: {exc}") from None
    if initial is None:
        raise ModelError("missing 'initial' declaration")
    for (s, a), succ in trans.items():
        for t, _ in succ:
            for x in (s, t):
                if x not in labels:
                    raise ModelError(f"undeclared state {x!r} in transition ({s}, {a})")
    m = LabeledMDP(
        tuple(states),
        initial,
        tuple(actions),
        {k: tuple(v) for k, v in trans.items()},
        labels,
        cost,
        max(cost.values(), default=0.0) if rmax is None else rmax,
    )
    problems = validate(m)
    if problems:
        raise ModelError("; ".join(problems))
    # values within tolerance of [0, 1] are clamped onto it
    clamped = {k: tuple((t, min(max(p, 0.0), 1.0)) for t, p in v) for k, v in m.transitions.items()}
    return replace(m, transitions=clamped)


def load_mdp(path) -> LabeledMDP:
    with open(path) as fh:
        return loads_mdp(fh.read())


def dumps_mdp(m: LabeledMDP) -> str:
    lines = []
    for s in m.states:
        lab = m.label(s)
        lines.append(f"state {s}" + (f" label {','.join(sorted(lab))}" if lab else ""))
    lines.append(f"initial {m.initial}")
    lines.append(f"rmax {m.rmax!r}")
    for s in m.states:
        for a in m.enabled(s):
            for t, p in m.transitions[(s, a)]:
                lines.append(f"trans {s} {a} {t} {p!r} cost {m.cost[(s, a)]!r}")
    return "\n".join(lines) + "\n"


def dump_mdp(m: LabeledMDP, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_mdp(m))
