"""Command line entry point: compose, synthesize, learn, simulate, inspect,
scenario.

Reports are ``key: value`` lines in a fixed order between ``---`` markers;
``--json`` prints the same keys as a JSON object. Exit status is 0 on
success, 1 on domain errors and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path
from statistics import NormalDist

import numpy as np

from . import __version__
from .acpc import MixingCapExceeded, estimate_mixing_cycle, evaluate_acpc, t_cycle_curve
from .automata import DRA, dump_dra, load_dra, parse_ltl, translate_fragment
from .casestudy import ScenarioConfig, build_scenario, shipped_dra
from .errors import (
    AssumptionViolation,
    BudgetExhausted,
    DivergentACPC,
    ModelError,
    StructureViolation,
)
from .graph import (
    accepting_mecs,
    compute_cycle_bound,
    entrance,
    is_communicating,
    maximal_end_components,
)
from .mdp import compose_all, dump_mdp, load_mdp, structure_of, validate
from .product import ProductMDP, build_product, project_policy
from .simulation import Simulator, write_trace

DEFAULT_SEED = 0
DOMAIN_ERRORS = (
    ModelError,
    AssumptionViolation,
    DivergentACPC,
    StructureViolation,
    BudgetExhausted,
    MixingCapExceeded,
    OSError,
)


class Report:
    def __init__(self, command: str):
        self.items: list[tuple[str, object]] = [("command", command)]

    def add(self, key: str, value) -> None:
        self.items.append((key, value))

    def render(self, as_json: bool) -> str:
        if as_json:
            return json.dumps({k: _plain(v) for k, v in self.items}, indent=2) + "\n"
        lines = ["---"]
        for k, v in self.items:
            v = _plain(v)
            if isinstance(v, float):
                v = f"{v:.6f}"
            elif isinstance(v, (list, dict)):
                v = json.dumps(v)
            lines.append(f"{k}: {v}")
        lines.append("---")
        return "\n".join(lines) + "\n"


def _plain(v):
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    if isinstance(v, list):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    return v


def _digest(paths) -> str:
    h = hashlib.sha256()
    for p in paths:
        if p:
            h.update(Path(p).read_bytes())
    return h.hexdigest()[:16]


def _automaton(args, mdp) -> DRA:
    if args.dra:
        return load_dra(args.dra)
    if args.spec:
        return translate_fragment(parse_ltl(args.spec, mdp.ap | {args.pi_label}))
    raise ModelError("give --spec or --dra")


def _pstate(p: ProductMDP, i: int) -> str:
    s, q = p.states[i]
    return f"{s},{q}"


def write_policy(p: ProductMDP, policy, path) -> None:
    with open(path, "w") as fh:
        for i in sorted(policy):
            fh.write(f"{_pstate(p, i)} {policy[i]}\n")


def read_policy(path) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if len(tok) != 2:
            raise ModelError(f"{path}:{lineno}: expected '<state> <action>'")
        out[tok[0]] = tok[1]
    return out


# -- subcommands --------------------------------------------------------------


def cmd_compose(args) -> Report:
    models = [load_mdp(p) for p in args.models]
    m = compose_all(models)
    problems = validate(m)
    if problems:
        raise ModelError("; ".join(problems))
    dump_mdp(m, args.out)
    r = Report("compose")
    r.add("inputs_digest", _digest(args.models))
    r.add("states", len(m.states))
    r.add("actions", list(m.actions))
    r.add("output", str(args.out))
    return r


def cmd_inspect(args) -> Report:
    m = load_mdp(args.model)
    d = _automaton(args, m)
    p = build_product(m, d, args.pi_label)
    r = Report("inspect")
    r.add("inputs_digest", _digest([args.model, args.dra]))
    r.add("mdp_states", len(m.states))
    r.add("dra_states", len(d.states))
    r.add("acceptance_pairs", len(d.pairs))
    r.add("product_states_full", p.full_size)
    r.add("product_states_reachable", len(p))
    for k, (L, K) in enumerate(p.pairs):
        r.add(f"pair{k}_L", len(L))
        r.add(f"pair{k}_K", len(K))
    mecs = maximal_end_components(p)
    r.add("MECs", f"{len(mecs)} ({', '.join(str(len(c)) for c in mecs)} states)")
    amecs = accepting_mecs(p)
    r.add("AMECs", f"{len(amecs)} ({', '.join(str(len(c)) for c in amecs)} states)")
    for k, c in enumerate(amecs):
        pre = f"amec{k}"
        r.add(f"{pre}_states", len(c))
        r.add(f"{pre}_contains_initial", p.initial in c.states)
        r.add(f"{pre}_communicating", is_communicating(c))
        r.add(f"{pre}_markers", len(c.markers))
        try:
            r.add(f"{pre}_D", compute_cycle_bound(c))
            r.add(f"{pre}_assumption2", "ok")
        except AssumptionViolation as exc:
            r.add(f"{pre}_assumption2", str(exc))
        try:
            r.add(f"{pre}_entrance", _pstate(p, entrance(p, c)))
            r.add(f"{pre}_assumption3", "ok")
        except AssumptionViolation as exc:
            r.add(f"{pre}_assumption3", str(exc))
        if args.members:
            r.add(f"{pre}_members", [_pstate(p, i) for i in c.ordered()])
    return r


def cmd_synthesize(args) -> Report:
    from .synthesis import synthesize

    m = load_mdp(args.model)
    d = _automaton(args, m)
    horizon = None if args.horizon == "inf" else int(args.horizon)
    res = synthesize(m, d, args.pi_label, horizon, args.epsilon)
    best = res.best
    r = Report("synthesize")
    r.add("inputs_digest", _digest([args.model, args.dra]))
    r.add("spec", args.spec or f"dra:{Path(args.dra).name}")
    r.add("horizon", args.horizon)
    r.add("product_states", len(res.product))
    r.add("amecs", len(res.components))
    r.add("amec_chosen", res.chosen)
    r.add("amec_states", len(best.component))
    r.add("p_max", res.p_max)
    r.add("J", res.J)
    r.add("method", best.value.method)
    if best.entrance is not None:
        r.add("entrance", _pstate(res.product, best.entrance))
    if args.epsilon is not None:
        r.add("epsilon", args.epsilon)
        r.add("T_C", best.mixing_cycle)
    for note in res.notes:
        r.add("note", note)
    if args.policy_out:
        write_policy(res.product, res.policy, args.policy_out)
        r.add("policy_file", str(args.policy_out))
    if args.figures and best.entrance is not None:
        from .plotting import plot_t_cycle_gap

        out = Path(args.figures)
        out.mkdir(parents=True, exist_ok=True)
        c = best.component
        g = best.f_cycle if horizon is None else _inf_policy(c)
        J = evaluate_acpc(c, g).J
        span = max(args.curve_length, (best.mixing_cycle or 0) + 5)
        curve = t_cycle_curve(c, g, best.entrance, span)
        fig = out / "t_cycle_gap.png"
        plot_t_cycle_gap(curve, J, fig, args.epsilon, best.mixing_cycle)
        r.add("figure_t_cycle_gap", str(fig))
    return r


def _inf_policy(c):
    from .acpc import optimize_acpc

    return optimize_acpc(c)[0]


def cmd_learn(args) -> Report:
    from .acpc import evaluate_t_cycle_acpc, optimize_acpc
    from .learning import model_learning_and_policy_finding

    structure = load_mdp(args.structure)
    truth = load_mdp(args.truth_model) if args.truth_model else structure
    if structure_of(truth).relation != structure_of(structure).relation:
        raise StructureViolation("truth model support differs from the declared structure")
    d = _automaton(args, structure)
    sim = Simulator(truth, args.seed, args.pi_label)
    T = args.mixing_cycles if args.mixing_cycles == "auto" else int(args.mixing_cycles)
    t0 = time.perf_counter()
    rep = model_learning_and_policy_finding(
        sim, structure, d, args.epsilon, args.delta, T, args.budget, args.pi_label,
        args.rmax, args.critical_value, args.relax,
    )
    best = rep.best
    r = Report("learn")
    r.add("inputs_digest", _digest([args.structure, args.truth_model, args.dra]))
    r.add("seed", args.seed)
    r.add("epsilon", args.epsilon)
    r.add("delta", args.delta)
    r.add("critical_value", args.critical_value or NormalDist().inv_cdf(1 - args.delta))
    r.add("theta", best.theta)
    r.add("relax", args.relax)
    r.add("T", best.T)
    r.add("D", best.D)
    r.add("amecs", len(rep.components))
    r.add("amec_chosen", rep.chosen)
    r.add("amec_states", len(best.component))
    r.add("entrance", _pstate(rep.product, best.entrance))
    r.add("steps", rep.steps)
    r.add("cycles", rep.cycles)
    r.add("J_learned", best.J)
    if args.truth_model:
        tp = build_product(truth, d, args.pi_label)
        tc = best.component.with_product(tp)
        pol = {i: rep.policy[i] for i in tc.states}
        J_true = evaluate_t_cycle_acpc(tc, pol, best.T, best.entrance).J
        J_star = optimize_acpc(tc)[1].J
        r.add("J_true_policy", J_true)
        r.add("J_star_true", J_star)
        r.add("gap_vs_truth", J_true - J_star)
    if args.timing:
        r.add("wall_time_s", round(time.perf_counter() - t0, 3))
    if args.policy_out:
        write_policy(rep.product, rep.policy, args.policy_out)
        r.add("policy_file", str(args.policy_out))
    if args.model_out:
        dump_mdp(rep.learned.mdp, args.model_out)
        r.add("model_file", str(args.model_out))
    if args.figures:
        from .plotting import plot_knownness, plot_t_cycle_gap

        out = Path(args.figures)
        out.mkdir(parents=True, exist_ok=True)
        fig = out / "knownness.png"
        plot_knownness([c.exploration[-1].progress for c in rep.components], fig)
        r.add("figure_knownness", str(fig))
        c = best.component
        g = optimize_acpc(c)[0]
        J = evaluate_acpc(c, g).J
        try:
            T_mix = estimate_mixing_cycle(c, g, args.epsilon, best.entrance)
        except MixingCapExceeded:
            T_mix = None
        curve = t_cycle_curve(c, g, best.entrance, max(args.curve_length, (T_mix or 0) + 5))
        fig = out / "t_cycle_gap.png"
        plot_t_cycle_gap(curve, J, fig, args.epsilon, T_mix)
        r.add("figure_t_cycle_gap", str(fig))
    return r


def cmd_simulate(args) -> Report:
    m = load_mdp(args.model)
    raw = read_policy(args.policy)
    if args.dra or args.spec:
        d = _automaton(args, m)
        p = build_product(m, d, args.pi_label)
        pol = {}
        for key, a in raw.items():
            s, _, q = key.rpartition(",")
            if (s, q) not in p.index:
                raise ModelError(f"policy names unknown product state {key!r}")
            pol[p.index[(s, q)]] = a
        policy = project_policy(p, pol)
    else:
        policy = raw
    sim = Simulator(m, args.seed, args.pi_label, record=bool(args.trace))
    if args.cycles is not None:
        summary = sim.run_policy(policy, cycles=args.cycles)
    else:
        summary = sim.run_policy(policy, steps=args.steps or 10_000)
    r = Report("simulate")
    r.add("inputs_digest", _digest([args.model, args.policy, args.dra]))
    r.add("seed", args.seed)
    r.add("steps", summary.steps)
    r.add("cycles", summary.cycles)
    r.add("total_cost", summary.total_cost)
    r.add("empirical_acpc", summary.acpc if summary.cycles else "undefined (no cycle completed)")
    if args.trace:
        write_trace(summary, args.trace)
        r.add("trace_file", str(args.trace))
    return r


def cmd_scenario(args) -> Report:
    cfg = ScenarioConfig.from_json(Path(args.config).read_text()) if args.config else ScenarioConfig()
    sc = build_scenario(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = ["task", "robot", "trust", "fatigue"]
    for name, m in zip(names, sc.components):
        dump_mdp(m, out / f"{name}.mdp")
    dump_mdp(sc.composed, out / "composed.mdp")
    (out / "spec.ltl").write_text(cfg.spec + "\n")
    dump_dra(shipped_dra(), out / "spec9.dra")
    (out / "scenario.json").write_text(cfg.to_json())
    r = Report("scenario")
    r.add("composed_states", len(sc.composed.states))
    r.add("cost_combination", cfg.cost_combination)
    r.add("spec", cfg.spec)
    r.add("output_dir", str(out))
    return r


# -- argument parsing ---------------------------------------------------------


def _spec_flags(sp, required=True):
    g = sp.add_mutually_exclusive_group(required=required)
    g.add_argument("--spec", help="LTL formula in the supported fragment")
    g.add_argument("--dra", help="automaton file (overrides --spec)")
    sp.add_argument("--pi-label", default="pi", help="label marking cycle completion")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ltlacpc", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--json", action="store_true", help="print the report as JSON")

    sp = sub.add_parser("compose", help="parallel composition of model files")
    sp.add_argument("models", nargs="+")
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_compose)

    sp = sub.add_parser("inspect", help="product, end components and assumption checks")
    sp.add_argument("--model", required=True)
    _spec_flags(sp)
    sp.add_argument("--members", action="store_true", help="list AMEC member states")
    common(sp)
    sp.set_defaults(func=cmd_inspect)

    sp = sub.add_parser("synthesize", help="optimal policy for a known model")
    sp.add_argument("--model", required=True)
    _spec_flags(sp)
    sp.add_argument("--horizon", default="inf", help="'inf' or a number of cycles T")
    sp.add_argument("--epsilon", type=float, help="report the epsilon-mixing cycle")
    sp.add_argument("--policy-out")
    sp.add_argument("--figures", help="directory for report figures")
    sp.add_argument("--curve-length", type=int, default=30)
    common(sp)
    sp.set_defaults(func=cmd_synthesize)

    sp = sub.add_parser("learn", help="learn the model inside accepting components, then synthesize")
    sp.add_argument("--structure", required=True, help="model file; only its support is used")
    sp.add_argument("--truth-model", help="hidden model driving the simulator")
    _spec_flags(sp)
    sp.add_argument("--epsilon", type=float, default=0.35)
    sp.add_argument("--delta", type=float, default=0.1)
    sp.add_argument("--mixing-cycles", default="auto", help="'auto' or T")
    sp.add_argument("--budget", type=int, default=20_000_000, help="maximum simulation steps")
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sp.add_argument("--critical-value", type=float)
    sp.add_argument("--rmax", type=float, default=1.0, help="cost bound in the knownness threshold")
    sp.add_argument("--relax", type=float, default=1.0, help="threshold multiplier (1 = untightened)")
    sp.add_argument("--policy-out")
    sp.add_argument("--model-out")
    sp.add_argument("--figures", help="directory for report figures")
    sp.add_argument("--curve-length", type=int, default=30)
    sp.add_argument("--timing", action="store_true", help="include wall time in the report")
    common(sp)
    sp.set_defaults(func=cmd_learn)

    sp = sub.add_parser("simulate", help="run a policy on a model")
    sp.add_argument("--model", required=True)
    sp.add_argument("--policy", required=True)
    _spec_flags(sp, required=False)
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--steps", type=int)
    g.add_argument("--cycles", type=int)
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sp.add_argument("--trace", help="write a tab-separated trace")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("scenario", help="write the assembly case-study files")
    sp.add_argument("--out", required=True)
    sp.add_argument("--config", help="JSON scenario configuration")
    common(sp)
    sp.set_defaults(func=cmd_scenario)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        report = args.func(args)
    except DOMAIN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(report.render(args.json))
    return 0


if __name__ == "__main__":
    sys.exit(main())
