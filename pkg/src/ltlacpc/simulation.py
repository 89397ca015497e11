"""Seeded ground-truth simulator.

Successors are drawn by inverse-CDF over the declared successor order using
uniform doubles from numpy's PCG64 bit generator, so a fixed seed and action
sequence reproduce a trajectory bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import ModelError
from .mdp import LabeledMDP

_BATCH = 4096


@dataclass(frozen=True)
class StepResult:
    state: str
    cost: float
    labels: frozenset[str]
    cycle: bool


@dataclass
class RunSummary:
    steps: int
    cycles: int
    total_cost: float
    trajectory: list[tuple[str, str, float, frozenset[str], bool]] = field(default_factory=list)

    @property
    def acpc(self) -> float:
        """Empirical cost per completed cycle (nan when no cycle completed)."""
        return self.total_cost / self.cycles if self.cycles else float("nan")

    @property
    def flagged(self) -> bool:
        return self.cycles == 0


class Simulator:
    def __init__(self, mdp: LabeledMDP, seed: int = 0, pi_label: str = "pi", record: bool = False):
        self.mdp = mdp
        self.pi_label = pi_label
        self.record = record
        self._rows = {}
        for key, row in mdp.transitions.items():
            succ = tuple(t for t, _ in row)
            self._rows[key] = (succ, np.cumsum([p for _, p in row]))
        self.reset(seed)

    def reset(self, seed: int | None = None) -> str:
        """Back to the initial state; reseed when ``seed`` is given."""
        if seed is not None:
            self.seed = seed
            self._rng = np.random.Generator(np.random.PCG64(seed))
            self._buf = np.empty(0)
            self._pos = 0
        self.state = self.mdp.initial
        self.steps = 0
        self.cycles = 0
        self.trajectory: list = []
        return self.state

    def _uniform(self) -> float:
        if self._pos >= len(self._buf):
            self._buf = self._rng.random(_BATCH)
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u

    def step(self, action: str) -> StepResult:
        row = self._rows.get((self.state, action))
        if row is None:
            raise ModelError(f"action {action!r} unavailable at {self.state!r}")
        succ, cdf = row
        k = int(np.searchsorted(cdf, self._uniform(), side="right"))
        nxt = succ[min(k, len(succ) - 1)]
        cost = self.mdp.cost[(self.state, action)]
        labels = self.mdp.label(nxt)
        cycle = self.pi_label in labels
        if self.record:
            self.trajectory.append((self.state, action, cost, self.mdp.label(self.state), cycle))
        self.state = nxt
        self.steps += 1
        self.cycles += cycle
        return StepResult(nxt, cost, labels, cycle)

    def run_policy(self, policy, steps: int | None = None, cycles: int | None = None) -> RunSummary:
        """Run from the current state until ``steps`` steps or ``cycles``
        completed cycles. ``policy`` is a state->action mapping, a callable,
        or an object with ``act``/``advance``/``reset`` (finite memory)."""
        if (steps is None) == (cycles is None):
            raise ValueError("give exactly one of steps or cycles")
        act, advance = _policy_fns(policy)
        record, self.record = self.record, True
        start = len(self.trajectory)
        total = 0.0
        n = done = 0
        try:
            while (steps is None or n < steps) and (cycles is None or done < cycles):
                s = self.state
                r = self.step(act(s))
                advance(s)
                total += r.cost
                done += r.cycle
                n += 1
        finally:
            self.record = record
        traj = self.trajectory[start:]
        if not record:
            del self.trajectory[start:]
        return RunSummary(n, done, total, traj)


def _policy_fns(policy) -> tuple[Callable[[str], str], Callable[[str], None]]:
    if hasattr(policy, "act"):
        return policy.act, getattr(policy, "advance", lambda s: None)
    if isinstance(policy, Mapping):
        def act(s):
            a = policy.get(s)
            if a is None:
                raise ModelError(f"policy undefined at {s!r}")
            return a
        return act, lambda s: None
    return policy, lambda s: None


def write_trace(summary: RunSummary, path) -> None:
    with open(path, "w") as fh:
        fh.write("step\tstate\taction\tcost\tlabels\tcycle\n")
        for k, (s, a, c, lab, cyc) in enumerate(summary.trajectory):
            fh.write(f"{k}\t{s}\t{a}\t{c!r}\t{','.join(sorted(lab))}\t{int(cyc)}\n")
