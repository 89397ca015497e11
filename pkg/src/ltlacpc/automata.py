"""LTL syntax, deterministic Rabin automata and a translator for the
persistence/response fragment used by task-allocation specifications.

Supported fragment (conjunctions of): ``G F p``, ``F G p``, ``G p`` and
``G (p -> X q)`` with ``p``/``q`` propositional. Anything else has to be
supplied as a DRA file.
"""

from __future__ import annotations

import itertools
import re
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import LTLSyntaxError, ModelError, UnsupportedFragment


# -- formulas --------------------------------------------------------------


@dataclass(frozen=True)
class Prop:
    name: str


@dataclass(frozen=True)
class Const:
    value: bool


@dataclass(frozen=True)
class Not:
    arg: object


@dataclass(frozen=True)
class And:
    left: object
    right: object


@dataclass(frozen=True)
class Or:
    left: object
    right: object


@dataclass(frozen=True)
class Implies:
    left: object
    right: object


@dataclass(frozen=True)
class Next:
    arg: object


@dataclass(frozen=True)
class Globally:
    arg: object


@dataclass(frozen=True)
class Finally:
    arg: object


@dataclass(frozen=True)
class Until:
    left: object
    right: object


@dataclass(frozen=True)
class LTLFormula:
    """A parsed formula together with the proposition set it ranges over."""

    root: object
    ap: frozenset[str]

    def __str__(self):
        return to_text(self.root)


_TOKEN = re.compile(r"\s*(?:(->)|([()&|!])|([A-Za-z_][A-Za-z0-9_]*)|(\S))")
_UNARY = {"!": Not, "G": Globally, "F": Finally, "X": Next}


def _tokenize(text: str):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:  # trailing whitespace
            break
        arrow, punct, ident, bad = m.groups()
        start = m.start(m.lastindex)
        if bad is not None:
            raise LTLSyntaxError(f"unknown operator {bad!r}", start)
        out.append((arrow or punct or ident, start))
        pos = m.end()
    out.append(("<end>", len(text)))
    return out


def parse_ltl(text: str, ap: Iterable[str]) -> LTLFormula:
    """Parse the ASCII grammar: ``G F X U & | ! ->``, parentheses, props.

    Precedence (tightest first): unary operators, ``U`` (right assoc.),
    ``&``, ``|``, ``->`` (right assoc.).
    """
    ap = frozenset(ap)
    toks = _tokenize(text)
    i = 0

    def peek():
        return toks[i][0]

    def take():
        nonlocal i
        tok = toks[i]
        i += 1
        return tok

    def implication():
        left = disjunction()
        if peek() == "->":
            take()
            return Implies(left, implication())
        return left

    def disjunction():
        left = conjunction()
        while peek() == "|":
            take()
            left = Or(left, conjunction())
        return left

    def conjunction():
        left = until()
        while peek() == "&":
            take()
            left = And(left, until())
        return left

    def until():
        left = unary()
        if peek() == "U":
            take()
            return Until(left, until())
        return left

    def unary():
        tok, off = toks[i]
        if tok in _UNARY:
            take()
            return _UNARY[tok](unary())
        return atom()

    def atom():
        tok, off = take()
        if tok == "(":
            inner = implication()
            close, coff = take()
            if close != ")":
                raise LTLSyntaxError("unbalanced parentheses: expected ')'", coff)
            return inner
        if tok in ("true", "false"):
            return Const(tok == "true")
        if tok == "<end>":
            raise LTLSyntaxError("unexpected end of formula", off)
        if re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", tok) and tok not in ("U",):
            if tok not in ap:
                raise LTLSyntaxError(f"unknown proposition {tok!r}", off)
            return Prop(tok)
        raise LTLSyntaxError(f"unexpected token {tok!r}", off)

    root = implication()
    tok, off = toks[i]
    if tok != "<end>":
        if tok == ")":
            raise LTLSyntaxError("unbalanced parentheses: unexpected ')'", off)
        raise LTLSyntaxError(f"unexpected token {tok!r}", off)
    return LTLFormula(root, ap)


def to_text(f) -> str:
    if isinstance(f, Prop):
        return f.name
    if isinstance(f, Const):
        return "true" if f.value else "false"
    if isinstance(f, Not):
        return f"!{to_text(f.arg)}"
    if isinstance(f, (Globally, Finally, Next)):
        op = {Globally: "G", Finally: "F", Next: "X"}[type(f)]
        return f"{op} {to_text(f.arg)}"
    op = {And: "&", Or: "|", Implies: "->", Until: "U"}[type(f)]
    return f"({to_text(f.left)} {op} {to_text(f.right)})"


def is_propositional(f) -> bool:
    if isinstance(f, (Prop, Const)):
        return True
    if isinstance(f, Not):
        return is_propositional(f.arg)
    if isinstance(f, (And, Or, Implies)):
        return is_propositional(f.left) and is_propositional(f.right)
    return False


def holds(f, symbol: frozenset[str]) -> bool:
    """Evaluate a propositional formula on one letter."""
    if isinstance(f, Prop):
        return f.name in symbol
    if isinstance(f, Const):
        return f.value
    if isinstance(f, Not):
        return not holds(f.arg, symbol)
    if isinstance(f, And):
        return holds(f.left, symbol) and holds(f.right, symbol)
    if isinstance(f, Or):
        return holds(f.left, symbol) or holds(f.right, symbol)
    if isinstance(f, Implies):
        return (not holds(f.left, symbol)) or holds(f.right, symbol)
    raise TypeError(f"not propositional: {to_text(f)}")


# -- automata --------------------------------------------------------------


def alphabet(ap: Iterable[str]) -> list[frozenset[str]]:
    """All subsets of ``ap`` in canonical order (by size, then sorted)."""
    names = sorted(ap)
    return [
        frozenset(c) for r in range(len(names) + 1) for c in itertools.combinations(names, r)
    ]


@dataclass(frozen=True)
class DRA:
    states: tuple[str, ...]
    initial: str
    ap: frozenset[str]
    delta: Mapping[tuple[str, frozenset[str]], str]
    pairs: tuple[tuple[frozenset[str], frozenset[str]], ...]

    def step(self, q: str, symbol: Iterable[str]) -> str:
        sym = frozenset(symbol)
        if not sym <= self.ap:
            raise ModelError(f"symbol {sorted(sym)} outside alphabet over {sorted(self.ap)}")
        return self.delta[(q, sym)]

    def check(self) -> None:
        known = set(self.states)
        if self.initial not in known:
            raise ModelError(f"initial state {self.initial!r} undeclared")
        for q in self.states:
            for sym in alphabet(self.ap):
                t = self.delta.get((q, sym))
                if t is None:
                    raise ModelError(f"transition function not total: missing ({q}, {_sym(sym)})")
                if t not in known:
                    raise ModelError(f"transition ({q}, {_sym(sym)}) targets undeclared {t!r}")
        if not self.pairs:
            raise ModelError("automaton has no acceptance pair")
        for L, K in self.pairs:
            if not K:
                raise ModelError("acceptance pair with empty K")
            bad = (L | K) - known
            if bad:
                raise ModelError(f"acceptance pair names undeclared states {sorted(bad)}")


def _sym(sym: frozenset[str]) -> str:
    return "{" + ",".join(sorted(sym)) + "}" if sym else "empty"


def dra_accepts(d: DRA, prefix: Sequence[Iterable[str]], cycle: Sequence[Iterable[str]]) -> bool:
    """Rabin acceptance of the lasso word ``prefix . cycle^omega``."""
    if not cycle:
        raise ModelError("cycle must be non-empty")
    cycle = [frozenset(c) for c in cycle]
    q = d.initial
    for sym in prefix:
        q = d.step(q, sym)
    seen: dict[tuple[str, int], int] = {}
    trace: list[str] = []
    pos = 0
    while (q, pos) not in seen:
        seen[(q, pos)] = len(trace)
        trace.append(q)
        q = d.step(q, cycle[pos])
        pos = (pos + 1) % len(cycle)
    inf = set(trace[seen[(q, pos)]:])
    return any(not (inf & L) and (inf & K) for L, K in d.pairs)


def _clauses(f):
    if isinstance(f, And):
        return _clauses(f.left) + _clauses(f.right)
    return [f]


def translate_fragment(formula: LTLFormula) -> DRA:
    """Build a one-pair DRA for a conjunction of fragment clauses."""
    gf, fg, safety, response = [], [], [], []
    for c in _clauses(formula.root):
        if isinstance(c, Const) and c.value:
            continue
        if isinstance(c, Globally) and isinstance(c.arg, Finally) and is_propositional(c.arg.arg):
            gf.append(c.arg.arg)
        elif isinstance(c, Finally) and isinstance(c.arg, Globally) and is_propositional(c.arg.arg):
            fg.append(c.arg.arg)
        elif isinstance(c, Globally) and is_propositional(c.arg):
            safety.append(c.arg)
        elif (
            isinstance(c, Globally)
            and isinstance(c.arg, Implies)
            and is_propositional(c.arg.left)
            and isinstance(c.arg.right, Next)
            and is_propositional(c.arg.right.arg)
        ):
            response.append((c.arg.left, c.arg.right.arg))
        else:
            raise UnsupportedFragment(
                f"clause {to_text(c)} is outside the supported fragment "
                "(G F p, F G p, G p, G (p -> X q)); supply an external DRA file instead"
            )

    trap = "trap"
    # state: (gf index, gf round completed, fg violated now, pending responses)
    init = (0, False, False, tuple(False for _ in response))

    def succ(state, sym):
        if state == trap:
            return trap
        i, _, _, pending = state
        if any(not holds(p, sym) for p in safety):
            return trap
        if any(pend and not holds(q, sym) for pend, (_, q) in zip(pending, response)):
            return trap
        done = False
        if gf:
            if holds(gf[i], sym):
                i += 1
                if i == len(gf):
                    i, done = 0, True
        bad = any(not holds(r, sym) for r in fg)
        return (i, done, bad, tuple(holds(p, sym) for p, _ in response))

    sigma = alphabet(formula.ap)
    order = [init]
    seen = {init}
    queue = deque([init])
    raw = {}
    while queue:
        s = queue.popleft()
        for sym in sigma:
            t = succ(s, sym)
            raw[(s, sym)] = t
            if t not in seen:
                seen.add(t)
                order.append(t)
                queue.append(t)
    names = {s: f"q{i}" for i, s in enumerate(order)}
    delta = {(names[s], sym): names[t] for (s, sym), t in raw.items()}
    L = frozenset(names[s] for s in order if s == trap or s[2])
    if gf:
        K = frozenset(names[s] for s in order if s != trap and s[1])
    else:
        K = frozenset(names[s] for s in order if s != trap)
    d = DRA(tuple(names[s] for s in order), names[init], formula.ap, delta, ((L, K),))
    if not K:
        # liveness symbol never readable: keep a well-formed, empty-language automaton
        d = DRA(d.states, d.initial, d.ap, d.delta, ((L | set(d.states), frozenset({d.initial})),))
    return d


# -- DRA text format ---------------------------------------------------------

_STATE_RE = re.compile(r"^q?(\d+)$")


def _state_name(tok: str, n: int, lineno: int) -> str:
    m = _STATE_RE.match(tok)
    if not m:
        raise ModelError(f"line {lineno}: bad state token {tok!r}")
    k = int(m.group(1))
    if k >= n:
        raise ModelError(f"line {lineno}: undeclared state {tok!r}")
    return f"q{k}"


def _parse_set(tok: str, lineno: int) -> list[str]:
    if not (tok.startswith("{") and tok.endswith("}")):
        raise ModelError(f"line {lineno}: expected '{{...}}', got {tok!r}")
    return [x.strip() for x in tok[1:-1].split(",") if x.strip()]


def loads_dra(text: str) -> DRA:
    n = None
    initial = None
    ap: list[str] = []
    explicit: dict[tuple[str, frozenset[str]], str] = {}
    defaults: dict[str, str] = {}
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        kind = tok[0]
        if kind == "states":
            try:
                n = int(tok[1])
            except (IndexError, ValueError):
                raise ModelError(f"line {lineno}: expected 'states <n>'") from None
        elif n is None:
            raise ModelError(f"line {lineno}: 'states <n>' must come first")
        elif kind == "initial":
            initial = _state_name(tok[1], n, lineno)
        elif kind == "ap":
            ap = tok[1:]
        elif kind == "trans":
            if len(tok) != 4:
                raise ModelError(f"line {lineno}: expected 'trans <q> <symbol> <q'>'")
            q = _state_name(tok[1], n, lineno)
            t = _state_name(tok[3], n, lineno)
            if tok[2] == "default":
                defaults[q] = t
                continue
            sym = frozenset() if tok[2] == "empty" else frozenset(_parse_set(tok[2], lineno))
            if not sym <= set(ap):
                raise ModelError(f"line {lineno}: symbol {tok[2]} uses undeclared propositions")
            explicit[(q, sym)] = t
        elif kind == "pair":
            rest = " ".join(tok[1:]).replace(" ", "")
            m = re.fullmatch(r"L=(\{[^}]*\})K=(\{[^}]*\})", rest)
            if not m:
                raise ModelError(f"line {lineno}: expected 'pair L={{...}} K={{...}}'")
            L = frozenset(_state_name(x, n, lineno) for x in _parse_set(m.group(1), lineno))
            K = frozenset(_state_name(x, n, lineno) for x in _parse_set(m.group(2), lineno))
            pairs.append((L, K))
        else:
            raise ModelError(f"line {lineno}: unknown declaration {kind!r}")
    if n is None or initial is None:
        raise ModelError("DRA file needs 'states' and 'initial'")
    states = tuple(f"q{k}" for k in range(n))
    delta = dict(explicit)
    for q in states:
        for sym in alphabet(ap):
            if (q, sym) not in delta and q in defaults:
                delta[(q, sym)] = defaults[q]
    d = DRA(states, initial, frozenset(ap), delta, tuple(pairs))
    d.check()
    return d


def load_dra(path) -> DRA:
    with open(path) as fh:
        return loads_dra(fh.read())


def dumps_dra(d: DRA) -> str:
    def num(q):
        return d.states.index(q)

    lines = [f"states {len(d.states)}", f"initial q{num(d.initial)}", "ap " + " ".join(sorted(d.ap))]
    for q in d.states:
        for sym in alphabet(d.ap):
            lines.append(f"trans q{num(q)} {_sym(sym)} q{num(d.delta[(q, sym)])}")
    for L, K in d.pairs:
        fmt = lambda S: "{" + ",".join(f"q{num(x)}" for x in sorted(S, key=num)) + "}"  # noqa: E731
        lines.append(f"pair L={fmt(L)} K={fmt(K)}")
    return "\n".join(lines) + "\n"


def dump_dra(d: DRA, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_dra(d))


def relabel(d: DRA) -> DRA:
    """Rename states to q0..q{n-1} in declaration order (for file round trips)."""
    names = {q: f"q{i}" for i, q in enumerate(d.states)}
    return DRA(
        tuple(names[q] for q in d.states),
        names[d.initial],
        d.ap,
        {(names[q], s): names[t] for (q, s), t in d.delta.items()},
        tuple((frozenset(names[x] for x in L), frozenset(names[x] for x in K)) for L, K in d.pairs),
    )
