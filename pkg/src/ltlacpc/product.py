"""Product of a labeled MDP with a deterministic Rabin automaton."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Mapping

from .automata import DRA
from .errors import ModelError
from .mdp import LabeledMDP


@dataclass(frozen=True)
class ProductMDP:
    """Reachable part of ``mdp x dra``.

    States are ``(mdp_state, dra_state)`` pairs indexed in breadth-first order
    from ``(initial, q0)``. ``succ[(i, a)]`` lists ``(j, p)`` pairs; all
    successors of one ``(i, a)`` share the same automaton state because the
    automaton reads the label of the state being left.
    """

    mdp: LabeledMDP
    dra: DRA
    states: tuple[tuple[str, str], ...]
    enabled: tuple[tuple[str, ...], ...]
    succ: Mapping[tuple[int, str], tuple[tuple[int, float], ...]]
    cost: Mapping[tuple[int, str], float]
    pairs: tuple[tuple[frozenset[int], frozenset[int]], ...]
    markers: frozenset[int]
    pi_label: str
    index: Mapping[tuple[str, str], int] = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.index is None:
            object.__setattr__(self, "index", {s: i for i, s in enumerate(self.states)})

    @property
    def initial(self) -> int:
        return 0

    @property
    def full_size(self) -> int:
        """|S| * |Q|, the size before reachability pruning."""
        return len(self.mdp.states) * len(self.dra.states)

    def __len__(self):
        return len(self.states)

    def with_probabilities(self, mdp: LabeledMDP) -> "ProductMDP":
        """Same product structure with probabilities and costs from ``mdp``.

        ``mdp`` must share the support of the original model (an
        approximation in the sense used by the learner).
        """
        succ = {}
        for (i, a), row in self.succ.items():
            s, _ = self.states[i]
            probs = dict(mdp.transitions[(s, a)])
            succ[(i, a)] = tuple((j, probs.get(self.states[j][0], 0.0)) for j, _ in row)
        cost = {(i, a): mdp.cost[(self.states[i][0], a)] for (i, a) in self.succ}
        return ProductMDP(
            mdp, self.dra, self.states, self.enabled, succ, cost, self.pairs,
            self.markers, self.pi_label, self.index,
        )


def build_product(m: LabeledMDP, d: DRA, pi_label: str = "pi") -> ProductMDP:
    extra = m.ap - d.ap
    if extra:
        raise ModelError(f"MDP labels {sorted(extra)} are outside the automaton alphabet")
    start = (m.initial, d.initial)
    order = [start]
    index = {start: 0}
    queue = deque([start])
    succ, cost, enabled = {}, {}, []
    while queue:
        s, q = queue.popleft()
        i = index[(s, q)]
        lab = m.label(s)
        if not lab <= d.ap:
            raise ModelError(f"label {sorted(lab)} of {s!r} outside automaton alphabet")
        q2 = d.step(q, lab)
        acts = m.enabled(s)
        enabled.append(acts)
        for a in acts:
            row = []
            for t, p in m.transitions[(s, a)]:
                key = (t, q2)
                if key not in index:
                    index[key] = len(order)
                    order.append(key)
                    queue.append(key)
                row.append((index[key], p))
            succ[(i, a)] = tuple(row)
            cost[(i, a)] = m.cost[(s, a)]
    pairs = tuple(
        (
            frozenset(i for i, (_, q) in enumerate(order) if q in L),
            frozenset(i for i, (_, q) in enumerate(order) if q in K),
        )
        for L, K in d.pairs
    )
    markers = frozenset(i for i, (s, _) in enumerate(order) if pi_label in m.label(s))
    return ProductMDP(
        m, d, tuple(order), tuple(enabled), succ, cost, pairs, markers, pi_label, index
    )


class ProjectedPolicy:
    """Finite-memory policy on the base MDP obtained from a memoryless
    product policy; the memory is the automaton state.

    Usage: ``reset()``, then per step ``a = act(s)`` and after the move
    ``advance(s)`` with the state that was just left.
    """

    def __init__(self, product: ProductMDP, policy: Mapping[int, str]):
        self.product = product
        self.policy = dict(policy)
        self.q = product.dra.initial

    def reset(self) -> None:
        self.q = self.product.dra.initial

    def act(self, s: str) -> str:
        i = self.product.index.get((s, self.q))
        if i is None or i not in self.policy:
            raise ModelError(f"policy undefined at product state ({s}, {self.q})")
        return self.policy[i]

    def advance(self, s: str) -> None:
        self.q = self.product.dra.step(self.q, self.product.mdp.label(s))

    @property
    def memoryless(self) -> bool:
        return len(self.product.dra.states) == 1


def project_policy(p: ProductMDP, f: Mapping[int, str]) -> ProjectedPolicy:
    return ProjectedPolicy(p, f)


def lift_path(p: ProductMDP, path: list[str]) -> list[int]:
    """Product path corresponding to a base path (one-to-one correspondence)."""
    q = p.dra.initial
    out = []
    for s in path:
        out.append(p.index[(s, q)])
        q = p.dra.step(q, p.mdp.label(s))
    return out
