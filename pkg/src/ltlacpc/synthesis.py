"""Known-model synthesis: maximize the probability of satisfying the
specification, then minimize the average cost per cycle inside the chosen
accepting end component."""

from __future__ import annotations

from dataclasses import dataclass, field

from .acpc import (
    AcpcValue,
    assemble_policy,
    estimate_mixing_cycle,
    optimize_acpc,
    optimize_t_cycle,
)
from .automata import DRA
from .errors import AssumptionViolation, ModelError
from .graph import EndComponent, accepting_mecs, entrance, max_reach_probability
from .mdp import LabeledMDP
from .product import ProductMDP, build_product

REACH_TOL = 1e-9


@dataclass
class ComponentResult:
    component: EndComponent
    reach: float
    f_reach: dict[int, str]
    f_cycle: dict[int, str] | None = None
    value: AcpcValue | None = None
    entrance: int | None = None
    mixing_cycle: int | None = None


@dataclass
class SynthesisResult:
    product: ProductMDP
    components: list[ComponentResult]
    chosen: int
    policy: dict[int, str]
    p_max: float
    horizon: int | None
    notes: list[str] = field(default_factory=list)

    @property
    def best(self) -> ComponentResult:
        return self.components[self.chosen]

    @property
    def J(self) -> float:
        return self.best.value.J


def _start_state(p: ProductMDP, comp: EndComponent) -> int:
    try:
        return entrance(p, comp)
    except AssumptionViolation:
        if p.initial in comp.states:
            return p.initial
        raise


def synthesize(
    mdp: LabeledMDP,
    dra: DRA,
    pi_label: str = "pi",
    horizon: int | None = None,
    epsilon: float | None = None,
    product: ProductMDP | None = None,
) -> SynthesisResult:
    """``horizon=None`` optimizes the infinite-horizon ACPC, an integer ``T``
    the ``T``-cycle ACPC from the component's entrance. With ``epsilon`` the
    mixing cycle of each component's optimal policy is reported too."""
    p = product or build_product(mdp, dra, pi_label)
    comps = accepting_mecs(p)
    if not comps:
        raise ModelError("no accepting end component: the specification cannot be satisfied")
    union = frozenset().union(*(c.states for c in comps))
    p_max = float(max_reach_probability(p, union).values[p.initial])
    results = []
    for c in comps:
        r = max_reach_probability(p, c.states)
        results.append(ComponentResult(c, float(r.values[p.initial]), r.policy))
    best_reach = max(r.reach for r in results)
    notes = []
    if best_reach < p_max - REACH_TOL:
        notes.append(
            f"maximal satisfaction probability {p_max:.6g} needs several components; "
            f"single-component policies reach {best_reach:.6g}"
        )
    candidates = [k for k, r in enumerate(results) if r.reach >= best_reach - REACH_TOL]
    for k in candidates:
        r = results[k]
        c = r.component
        if not c.markers:
            continue
        if horizon is None:
            r.f_cycle, r.value = optimize_acpc(c)
            try:
                r.entrance = _start_state(p, c)
            except AssumptionViolation as exc:
                notes.append(f"component {k}: {exc}")
        else:
            r.entrance = _start_state(p, c)
            r.f_cycle, r.value = optimize_t_cycle(c, horizon, r.entrance)
        if epsilon is not None and r.entrance is not None:
            g = r.f_cycle if horizon is None else optimize_acpc(c)[0]
            r.mixing_cycle = estimate_mixing_cycle(c, g, epsilon, r.entrance)
    scored = [(results[k].value.J, k) for k in candidates if results[k].value is not None]
    if not scored:
        raise ModelError("no reachable accepting component contains a cycle marker")
    _, chosen = min(scored)
    best = results[chosen]
    policy = assemble_policy(p, best.f_reach, best.f_cycle, best.component)
    return SynthesisResult(p, results, chosen, policy, p_max, horizon, notes)
