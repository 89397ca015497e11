"""Human-robot assembly scenario: task, robot, trust and fatigue models.

Composition order is (task, robot, trust, fatigue), so composite states read
``w0|r0|t0|f0``. Action names: ``ar0``/``ar1`` (robot does stage 1/2),
``ah0``/``ah1`` (human does stage 1/2), ``ah2`` (final human stage) and
``repair``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from importlib import resources

from .automata import DRA, LTLFormula, loads_dra, parse_ltl
from .errors import ModelError
from .mdp import LabeledMDP, compose_all, make_mdp

SPEC = "G F pi & G (faulty -> X normal)"
AP = ("pi", "normal", "faulty")
# number of component models that declare each action (used by "mean")
_PARTICIPANTS = {"ar0": 4, "ar1": 4, "ah0": 2, "ah1": 2, "ah2": 2, "repair": 3}


@dataclass(frozen=True)
class ScenarioConfig:
    fault_prob: tuple[float, float] = (0.6, 0.65)
    fatigue_robot_stay: tuple[float, float] = (0.5, 0.4)
    fatigue_human_stay: tuple[float, float, float] = (0.5, 0.4, 0.45)
    fatigue_repair_stay: float = 0.4
    trust_stay: tuple[float, float] = (0.5, 0.4)
    trust_mid_stay: tuple[float, float] = (0.3, 0.4)
    task_cost: float = 0.7
    robot_cost: tuple[float, float] = (0.003, 0.07)
    repair_cost: float = 0.07
    fatigue_cost_robot: tuple[float, float, float] = (0.3, 0.1, 0.03)
    fatigue_cost_human: tuple[float, float, float] = (0.03, 0.1, 0.3)
    fatigue_cost_repair: tuple[float, float, float] = (0.03, 0.1, 0.3)
    trust_cost_robot: tuple[float, float, float] = (0.3, 0.17, 0.03)
    trust_cost_repair: tuple[float, float, float] = (0.17, 0.17, 0.5)
    # "sum" follows the composition rule; "mean" divides by the number of
    # participating components (an alternative reading, see the README)
    cost_combination: str = "sum"
    # R_max used by the knownness threshold
    knownness_rmax: float = 1.0
    spec: str = SPEC
    pi_label: str = "pi"

    def check(self) -> None:
        probs = [
            *self.fault_prob, *self.fatigue_robot_stay, *self.fatigue_human_stay,
            self.fatigue_repair_stay, *self.trust_stay, *self.trust_mid_stay,
        ]
        for p in probs:
            if not 0.0 <= p <= 1.0:
                raise ModelError(f"scenario probability {p} outside [0, 1]")
        costs = [
            self.task_cost, *self.robot_cost, self.repair_cost, *self.fatigue_cost_robot,
            *self.fatigue_cost_human, *self.fatigue_cost_repair, *self.trust_cost_robot,
            *self.trust_cost_repair,
        ]
        if any(c < 0 for c in costs):
            raise ModelError("scenario costs must be non-negative")
        if self.cost_combination not in ("sum", "mean"):
            raise ModelError(f"unknown cost combination {self.cost_combination!r}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        raw = json.loads(text)
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ModelError(f"unknown scenario keys: {sorted(unknown)}")
        raw = {k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()}
        return replace(cls(), **raw)


@dataclass(frozen=True)
class Scenario:
    config: ScenarioConfig
    task: LabeledMDP
    robot: LabeledMDP
    trust: LabeledMDP
    fatigue: LabeledMDP
    composed: LabeledMDP
    spec: LTLFormula
    pi_label: str = "pi"
    labels: dict = field(default_factory=lambda: {"normal": "normal", "faulty": "faulty"})

    @property
    def components(self) -> list[LabeledMDP]:
        return [self.task, self.robot, self.trust, self.fatigue]


def task_model(cfg: ScenarioConfig) -> LabeledMDP:
    c = cfg.task_cost
    trans = {
        ("w0", "ar0"): [("w1", 1.0)], ("w0", "ah0"): [("w1", 1.0)],
        ("w1", "ar1"): [("w2", 1.0)], ("w1", "ah1"): [("w2", 1.0)],
        ("w2", "ah2"): [("w0", 1.0)],
    }
    return make_mdp(
        ["w0", "w1", "w2"], "w0", trans, {"w0": [cfg.pi_label]}, {k: c for k in trans},
        actions=["ar0", "ah0", "ar1", "ah1", "ah2"],
    )


def robot_model(cfg: ScenarioConfig) -> LabeledMDP:
    trans, cost = {}, {}
    for i in (0, 1):
        p = cfg.fault_prob[i]
        trans[("r0", f"ar{i}")] = [("r0", 1 - p), ("r1", p)]
        cost[("r0", f"ar{i}")] = cfg.robot_cost[i]
    trans[("r1", "repair")] = [("r0", 1.0)]
    cost[("r1", "repair")] = cfg.repair_cost
    return make_mdp(
        ["r0", "r1"], "r0", trans, {"r0": ["normal"], "r1": ["faulty"]}, cost,
        actions=["ar0", "ar1", "repair"],
    )


def trust_model(cfg: ScenarioConfig) -> LabeledMDP:
    trans, cost = {}, {}
    for i in (0, 1):
        a = f"ar{i}"
        stay, mid = cfg.trust_stay[i], cfg.trust_mid_stay[i]
        trans[("t0", a)] = [("t0", stay), ("t1", 1 - stay)]
        trans[("t1", a)] = [("t0", (1 - mid) / 2), ("t1", mid), ("t2", (1 - mid) / 2)]
        trans[("t2", a)] = [("t1", 1 - stay), ("t2", stay)]
        for k in range(3):
            cost[(f"t{k}", a)] = cfg.trust_cost_robot[k]
    trans[("t0", "repair")] = [("t0", 1.0)]
    trans[("t1", "repair")] = [("t0", 1.0)]
    trans[("t2", "repair")] = [("t1", 1.0)]
    for k in range(3):
        cost[(f"t{k}", "repair")] = cfg.trust_cost_repair[k]
    return make_mdp(["t0", "t1", "t2"], "t0", trans, {}, cost, actions=["ar0", "ar1", "repair"])


def fatigue_model(cfg: ScenarioConfig) -> LabeledMDP:
    trans, cost = {}, {}

    def rises(a, stay, costs):
        trans[("f0", a)] = [("f0", stay), ("f1", 1 - stay)]
        trans[("f1", a)] = [("f1", stay), ("f2", 1 - stay)]
        trans[("f2", a)] = [("f2", 1.0)]
        for k in range(3):
            cost[(f"f{k}", a)] = costs[k]

    for i in (0, 1):
        a, stay = f"ar{i}", cfg.fatigue_robot_stay[i]
        trans[("f0", a)] = [("f0", 1.0)]
        trans[("f1", a)] = [("f0", 1 - stay), ("f1", stay)]
        trans[("f2", a)] = [("f1", 1 - stay), ("f2", stay)]
        for k in range(3):
            cost[(f"f{k}", a)] = cfg.fatigue_cost_robot[k]
    for i in (0, 1, 2):
        rises(f"ah{i}", cfg.fatigue_human_stay[i], cfg.fatigue_cost_human)
    rises("repair", cfg.fatigue_repair_stay, cfg.fatigue_cost_repair)
    return make_mdp(
        ["f0", "f1", "f2"], "f0", trans, {}, cost,
        actions=["ar0", "ar1", "ah0", "ah1", "ah2", "repair"],
    )


def build_scenario(cfg: ScenarioConfig | None = None) -> Scenario:
    cfg = cfg or ScenarioConfig()
    cfg.check()
    parts = [task_model(cfg), robot_model(cfg), trust_model(cfg), fatigue_model(cfg)]
    m = compose_all(parts)
    if cfg.cost_combination == "mean":
        cost = {(s, a): c / _PARTICIPANTS[a] for (s, a), c in m.cost.items()}
        m = replace(m, cost=cost, rmax=max(cost.values()))
    spec = parse_ltl(cfg.spec, set(AP) | {cfg.pi_label})
    return Scenario(cfg, *parts, m, spec, cfg.pi_label)


def shipped_dra() -> DRA:
    """The 9-state, one-pair automaton for the default specification."""
    text = resources.files("ltlacpc.data").joinpath("spec9.dra").read_text()
    return loads_dra(text)


def shipped_config_text() -> str:
    return resources.files("ltlacpc.data").joinpath("scenario.json").read_text()
