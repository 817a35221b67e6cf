"""Constraint-checked beam search over MiniPy statement tokens.

A token automaton tracks the syntactic state of the emitted prefix and turns
each step into new constraints (call arity and argument types at a closing
parenthesis, visibility at every name, forbidden relations, return types).
Each beam owns a :class:`ConstraintStore`; extensions whose store becomes
UNSAT are pruned before the top-k selection.
"""

from __future__ import annotations

import math
import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Protocol

from .constraints import (
    CallFact, Constraint, ConstraintStore, PrefixCache, SolverContext, TVar, TypeTerm,
    Visible, call_constraints, relation_constraints, return_constraints, violations,
)
from .graph import KnowledgeGraph
from .minipy import Call, Const, Expr, ListExpr, Name, Attribute, ParseError, format_expr, parse_statements

NAME = "NAME"
LIT = "LIT"
CALL_OPEN = "CALL_OPEN"
ARG_SEP = "ARG_SEP"
KW = "KW"
CALL_CLOSE = "CALL_CLOSE"
ASSIGN = "ASSIGN"
DOT = "DOT"
RETURN = "RETURN"
NEWLINE = "NEWLINE"
END = "END"

VALUED = (NAME, LIT, KW)
TOKEN_KINDS = (NAME, LIT, CALL_OPEN, ARG_SEP, KW, CALL_CLOSE, ASSIGN, DOT, RETURN, NEWLINE, END)
LIT_KINDS = ("int", "float", "str", "bool", "None", "list", "dict")

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


@dataclass(frozen=True, order=True)
class Token:
    kind: str
    value: str = ""

    def __post_init__(self) -> None:
        if self.kind not in TOKEN_KINDS:
            raise ValueError(f"unknown token kind {self.kind!r}")
        if (self.kind in VALUED) != bool(self.value):
            raise ValueError(f"token {self.kind} {'needs' if self.kind in VALUED else 'takes no'} value")
        if self.kind == LIT and self.value not in LIT_KINDS:
            raise ValueError(f"unknown literal kind {self.value!r}")
        if self.kind in (NAME, KW) and not _IDENT.fullmatch(self.value):
            raise ValueError(f"bad identifier {self.value!r}")

    def __str__(self) -> str:
        return f"{self.kind}({self.value})" if self.value else self.kind


def parse_token(text: str) -> Token:
    m = re.fullmatch(r"([A-Z_]+)(?:\(([^()]*)\))?", text.strip())
    if m is None:
        raise ValueError(f"bad token {text!r}")
    return Token(m.group(1), m.group(2) or "")


def tok(text: str) -> Token:
    return parse_token(text)


def tokens(text: str) -> tuple[Token, ...]:
    """Whitespace-separated token list, e.g. ``"NAME(f) CALL_OPEN CALL_CLOSE"``."""
    return tuple(parse_token(t) for t in text.split())


class IllegalToken(ValueError):
    pass


class NoValidSequence(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Prefix analysis
# ---------------------------------------------------------------------------

@dataclass
class DecodeContext:
    """Names the decoder can reference, with their kinds, and the solver context."""

    solver: SolverContext = field(default_factory=SolverContext)
    kinds: dict[str, str] = field(default_factory=dict)
    scope: str = "m"

    @classmethod
    def from_graph(cls, g: KnowledgeGraph, scope: str, nodes: Iterable[int] | None = None,
                   rules: Iterable = ()) -> DecodeContext:
        """Context over ``nodes`` of ``g`` (all nodes if omitted); the lattice spans all of ``g``."""
        full = SolverContext.from_graph(g, rules)
        ids = set(g.nodes) if nodes is None else set(nodes)
        names = {g.nodes[i].name: g.nodes[i].kind for i in ids}
        sigs = {n: s for n, s in full.signatures.items() if n in names}
        return cls(SolverContext(sigs, full.lattice, full.rules), names, scope)


@dataclass(frozen=True)
class OpenCall:
    callee: str | None
    args: tuple[TypeTerm, ...] = ()
    kwargs: tuple[tuple[str, TypeTerm], ...] = ()
    kw: str | None = None


@dataclass(frozen=True)
class Analysis:
    """Syntactic state of an emitted prefix."""

    state: str = "start"  # start | expr | name | dot | value | end
    dotted: tuple[str, ...] = ()
    term: TypeTerm | None = None
    stack: tuple[OpenCall, ...] = ()
    target: str | None = None
    ret: bool = False
    # the current name opened the statement, so an assignment may follow
    first: bool = False
    after_open: bool = False
    after_kw: bool = False
    locals: tuple[tuple[str, TypeTerm], ...] = ()
    next_var: int = 0

    def local(self, name: str) -> TypeTerm | None:
        for k, t in self.locals:
            if k == name:
                return t
        return None


def legal_kinds(a: Analysis) -> frozenset[str]:
    if a.state == "end":
        return frozenset()
    if a.state == "start":
        return frozenset((NAME, LIT, RETURN, END))
    if a.state == "dot":
        return frozenset((NAME,))
    if a.state == "expr":
        kinds = {NAME, LIT}
        if a.stack and not a.after_kw:
            kinds.add(KW)
            if a.stack[-1].kwargs:
                kinds = {KW}
        if a.after_open:
            kinds.add(CALL_CLOSE)
        return frozenset(kinds)
    done = {ARG_SEP, CALL_CLOSE} if a.stack else {NEWLINE}
    if a.state == "name":
        done |= {DOT, CALL_OPEN}
        if a.first and len(a.dotted) == 1 and not a.stack:
            done.add(ASSIGN)
    return frozenset(done)


def is_legal(a: Analysis, t: Token) -> bool:
    if t.kind not in legal_kinds(a):
        return False
    if t.kind == KW:
        top = a.stack[-1]
        return all(k != t.value for k, _ in top.kwargs)
    return True


def qualify(dotted: Sequence[str], dctx: DecodeContext) -> str | None:
    """Known qualified name for a written dotted name, searching enclosing scopes."""
    text = ".".join(dotted)
    parts = dctx.scope.split(".")
    for i in range(len(parts), 0, -1):
        cand = ".".join(parts[:i]) + "." + text
        if cand in dctx.kinds:
            return cand
    return text if text in dctx.kinds else None


def _fresh(a: Analysis) -> tuple[Analysis, TVar]:
    return replace(a, next_var=a.next_var + 1), TVar(a.next_var)


def _complete(a: Analysis, dctx: DecodeContext) -> tuple[Analysis, TypeTerm]:
    """Type term of the operand that just ended."""
    if a.state == "value":
        assert a.term is not None
        return a, a.term
    if len(a.dotted) == 1:
        t = a.local(a.dotted[0])
        if t is not None:
            return a, t
    return _fresh(a)


def _attach(call: OpenCall, t: TypeTerm) -> OpenCall:
    if call.kw is not None:
        return replace(call, kwargs=call.kwargs + ((call.kw, t),), kw=None)
    return replace(call, args=call.args + (t,))


def analyze_step(a: Analysis, t: Token, dctx: DecodeContext) -> tuple[Analysis, list[Constraint]]:
    """Advance the analysis by one token and return the constraints it emits."""
    if not is_legal(a, t):
        raise IllegalToken(f"{t} cannot follow state {a.state}")
    out: list[Constraint] = []
    solver = dctx.solver
    if t.kind == NAME:
        if a.state == "dot":
            a = replace(a, state="name", dotted=a.dotted + (t.value,))
        else:
            a = replace(a, state="name", dotted=(t.value,), first=a.state == "start",
                        after_open=False, after_kw=False)
        if not (len(a.dotted) == 1 and a.local(t.value) is not None):
            q = qualify(a.dotted, dctx)
            written = ".".join(a.dotted)
            out.append(Visible(q or (f"{dctx.scope}.{written}" if len(a.dotted) == 1 else written), dctx.scope))
            if q is not None:
                out.extend(relation_constraints(dctx.scope, "IMPORTS", q, solver))
        return a, out
    if t.kind == DOT:
        return replace(a, state="dot"), out
    if t.kind == LIT:
        return replace(a, state="value", term=t.value, dotted=(), first=False,
                       after_open=False, after_kw=False), out
    if t.kind == CALL_OPEN:
        q = qualify(a.dotted, dctx)
        return replace(a, state="expr", stack=a.stack + (OpenCall(q),), dotted=(),
                       first=False, after_open=True), out
    if t.kind == KW:
        top = replace(a.stack[-1], kw=t.value)
        return replace(a, state="expr", stack=a.stack[:-1] + (top,), after_kw=True, after_open=False), out
    if t.kind == ARG_SEP:
        a, term = _complete(a, dctx)
        top = _attach(a.stack[-1], term)
        return replace(a, state="expr", stack=a.stack[:-1] + (top,), dotted=(), term=None,
                       after_open=False, after_kw=False), out
    if t.kind == CALL_CLOSE:
        top = a.stack[-1]
        if a.state != "expr":
            a, term = _complete(a, dctx)
            top = _attach(top, term)
        a = replace(a, stack=a.stack[:-1])
        sig = solver.signatures.get(top.callee) if top.callee else None
        if top.callee is not None:
            out.extend(call_constraints(CallFact(top.callee, top.args, top.kwargs), solver))
            out.extend(relation_constraints(dctx.scope, "CALLS", top.callee, solver))
        if sig is not None:
            result: TypeTerm = sig.returns
        else:
            a, result = _fresh(a)
        return replace(a, state="value", term=result, dotted=(), after_open=False, after_kw=False), out
    if t.kind == ASSIGN:
        return replace(a, state="expr", target=a.dotted[0], dotted=(), first=False), out
    if t.kind == RETURN:
        return replace(a, state="expr", ret=True), out
    if t.kind == NEWLINE:
        a, term = _complete(a, dctx)
        if a.target is not None:
            rest = tuple((k, v) for k, v in a.locals if k != a.target)
            a = replace(a, locals=rest + ((a.target, term),))
        if a.ret:
            out.extend(return_constraints(term, dctx.scope, solver))
        return replace(a, state="start", dotted=(), term=None, target=None, ret=False, first=False), out
    assert t.kind == END
    return replace(a, state="end"), out


def analyze(seq: Iterable[Token], dctx: DecodeContext) -> tuple[Analysis, list[Constraint]]:
    a = Analysis()
    out: list[Constraint] = []
    for t in seq:
        a, cs = analyze_step(a, t, dctx)
        out.extend(cs)
    return a, out


def sequence_violations(seq: Sequence[Token], dctx: DecodeContext) -> list[Constraint]:
    """From-scratch check of a complete sequence, independent of any beam store."""
    _, cs = analyze(seq, dctx)
    return violations(cs, dctx.solver)


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

_LIT_EXPR = {
    "int": Const("int", 0), "float": Const("float", 0.0), "str": Const("str", ""),
    "bool": Const("bool", False), "None": Const("None", None),
    "list": ListExpr(()), "dict": Call(Name("dict")),
}


def _build_expr(seq: Sequence[Token], i: int) -> tuple[Expr, int]:
    t = seq[i]
    if t.kind == LIT:
        return _LIT_EXPR[t.value], i + 1
    e: Expr = Name(t.value)
    i += 1
    while i < len(seq) and seq[i].kind == DOT:
        e = Attribute(e, seq[i + 1].value)
        i += 2
    if i < len(seq) and seq[i].kind == CALL_OPEN:
        i += 1
        args: list[Expr] = []
        kws: list[tuple[str, Expr]] = []
        while seq[i].kind != CALL_CLOSE:
            if seq[i].kind == ARG_SEP:
                i += 1
                continue
            if seq[i].kind == KW:
                name = seq[i].value
                v, i = _build_expr(seq, i + 1)
                kws.append((name, v))
            else:
                v, i = _build_expr(seq, i)
                args.append(v)
        e = Call(e, tuple(args), tuple(kws))
        i += 1
    return e, i


def render(seq: Sequence[Token]) -> str:
    """MiniPy text of a token sequence (statements of a function body)."""
    lines = []
    stmt: list[Token] = []
    for t in seq:
        if t.kind in (NEWLINE, END):
            if stmt:
                lines.append(_render_stmt(stmt))
            stmt = []
            if t.kind == END:
                break
        else:
            stmt.append(t)
    if stmt:
        raise ValueError("sequence ends inside a statement")
    return "".join(ln + "\n" for ln in lines)


def _render_stmt(stmt: list[Token]) -> str:
    if stmt[0].kind == RETURN:
        e, _ = _build_expr(stmt, 1)
        return f"return {format_expr(e)}"
    if len(stmt) > 1 and stmt[1].kind == ASSIGN:
        e, _ = _build_expr(stmt, 2)
        return f"{stmt[0].value} = {format_expr(e)}"
    e, _ = _build_expr(stmt, 0)
    return format_expr(e)


def compiles(seq: Sequence[Token], dctx: DecodeContext | None = None) -> bool:
    """The analyzer accepts the whole sequence and its rendering parses as MiniPy."""
    try:
        a, _ = analyze(seq, dctx or DecodeContext())
        if a.state not in ("start", "end"):
            return False
        parse_statements(render(seq))
    except (IllegalToken, ParseError, ValueError):
        return False
    return True


# ---------------------------------------------------------------------------
# Token models
# ---------------------------------------------------------------------------

class TokenModel(Protocol):
    def next_candidates(self, prefix: Sequence[Token], context: object = None,
                        instruction: str = "") -> list[tuple[Token, float]]:
        ...


def _log_normalize(row: Iterable[tuple[Token, float]]) -> list[tuple[Token, float]]:
    row = list(row)
    if not row:
        return []
    m = max(lp for _, lp in row)
    z = m + math.log(sum(math.exp(lp - m) for _, lp in row))
    return sorted(((t, lp - z) for t, lp in row), key=lambda x: (-x[1], str(x[0])))


class ReferenceModel:
    """Back-off n-gram table (context order at most 3) over tokens.

    Contexts are looked up longest first; the empty context matches any
    prefix. Without a matching row the model is uniform over the tokens of
    its vocabulary that may legally follow the prefix.
    """

    def __init__(self, table: dict[tuple[Token, ...], list[tuple[Token, float]]],
                 vocab: Iterable[Token] = ()):
        for ctx in table:
            if len(ctx) > 3:
                raise ValueError("context order above 3")
        self.table = {ctx: _log_normalize(row) for ctx, row in table.items()}
        vs = set(vocab)
        for row in table.values():
            vs.update(t for t, _ in row)
        self.vocab = tuple(sorted(vs, key=str))

    def next_candidates(self, prefix: Sequence[Token], context: object = None,
                        instruction: str = "") -> list[tuple[Token, float]]:
        prefix = tuple(prefix)
        for n in range(min(3, len(prefix)), -1, -1):
            row = self.table.get(prefix[len(prefix) - n:])
            if row is not None:
                return list(row)
        try:
            a, _ = analyze(prefix, DecodeContext())
        except IllegalToken:
            return []
        legal = [t for t in self.vocab if is_legal(a, t)]
        if not legal:
            return []
        lp = -math.log(len(legal))
        return [(t, lp) for t in legal]


def reference_model(table: dict[tuple[Token, ...], list[tuple[Token, float]]],
                    vocab: Iterable[Token] = ()) -> ReferenceModel:
    return ReferenceModel(table, vocab)


_ROW = re.compile(r"CTX\s+(\S+)\s+TOK\s+(\S+)\s+LOGP\s+(\S+)")


def parse_table(text: str) -> dict[tuple[Token, ...], list[tuple[Token, float]]]:
    """Parse ``CTX <t1,t2,t3|-> TOK <token> LOGP <float>`` lines."""
    table: dict[tuple[Token, ...], list[tuple[Token, float]]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        m = _ROW.fullmatch(line)
        if m is None:
            raise ValueError(f"line {lineno}: expected 'CTX <ctx> TOK <token> LOGP <float>'")
        ctx = () if m.group(1) == "-" else tuple(parse_token(x) for x in m.group(1).split(","))
        lp = float(m.group(3))
        if not math.isfinite(lp):
            raise ValueError(f"line {lineno}: non-finite log-probability")
        table.setdefault(ctx, []).append((parse_token(m.group(2)), lp))
    return table


def format_table(table: dict[tuple[Token, ...], list[tuple[Token, float]]]) -> str:
    out = []
    for ctx in sorted(table, key=lambda c: [str(t) for t in c]):
        c = ",".join(str(t) for t in ctx) or "-"
        for t, lp in table[ctx]:
            out.append(f"CTX {c} TOK {t} LOGP {lp!r}")
    return "".join(ln + "\n" for ln in out)


def load_table(path: str | Path) -> dict[tuple[Token, ...], list[tuple[Token, float]]]:
    return parse_table(Path(path).read_text())


# ---------------------------------------------------------------------------
# Beam search
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecodeConfig:
    k: int = 5
    max_len: int = 24
    # work units allowed per constraint push; None disables the budget
    budget: int | None = None
    # candidates taken from the model per beam and step; None takes all
    fanout: int | None = None

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("beam width must be at least 1")
        if self.max_len < 1:
            raise ValueError("max_len must be at least 1")


@dataclass
class Beam:
    tokens: tuple[Token, ...]
    score: float
    store: ConstraintStore
    analysis: Analysis
    done: bool = False

    def key(self) -> tuple[float, tuple[str, ...]]:
        return (-self.score, tuple(str(t) for t in self.tokens))


@dataclass
class DecodeStats:
    steps: int = 0
    expansions: int = 0
    pruned: int = 0
    solver_work: int = 0
    cache_hits: int = 0


@dataclass
class DecodeResult:
    tokens: tuple[Token, ...]
    score: float
    stats: DecodeStats

    @property
    def text(self) -> str:
        return render(self.tokens)


def rank_key(score: float, seq: Sequence[Token]) -> tuple[float, tuple[str, ...]]:
    """Selection order: higher score first, ties broken on token text."""
    return (-score, tuple(str(t) for t in seq))


def decode(instruction: str, dctx: DecodeContext, model: TokenModel, cfg: DecodeConfig = DecodeConfig(),
           *, context: object = None, cache: PrefixCache | None = None) -> DecodeResult:
    """Highest-scoring finished sequence whose constraints are satisfiable.

    Raises NoValidSequence when every beam dies.
    """
    stats = DecodeStats()
    root = ConstraintStore(dctx.solver, budget=cfg.budget)
    live = [Beam((), 0.0, root, Analysis())]
    finished: list[Beam] = []
    for _ in range(cfg.max_len):
        if not live:
            break
        stats.steps += 1
        pool: list[tuple[tuple, Beam, Token, float, Analysis, list[Constraint]]] = []
        for b in live:
            cands = model.next_candidates(b.tokens, context, instruction)
            if cfg.fanout is not None:
                cands = cands[:cfg.fanout]
            exts = []
            for t, lp in cands:
                if not is_legal(b.analysis, t):
                    continue
                a2, cs = analyze_step(b.analysis, t, dctx)
                exts.append((t, lp, a2, cs))
            before = b.store.work
            statuses = b.store.batch_check([cs for _, _, _, cs in exts])
            stats.solver_work += b.store.work - before
            for (t, lp, a2, cs), st in zip(exts, statuses):
                stats.expansions += 1
                if not st.ok:
                    stats.pruned += 1
                    continue
                seq = b.tokens + (t,)
                score = b.score + lp
                pool.append((rank_key(score, seq), b, t, score, a2, cs))
        pool.sort(key=lambda x: x[0])
        live = []
        for _, parent, t, score, a2, cs in pool[:cfg.k]:
            seq = parent.tokens + (t,)
            store = _child_store(parent.store, seq, cs, dctx, cfg, cache, stats)
            beam = Beam(seq, score, store, a2, done=t.kind == END)
            if beam.done:
                if store.finalize().ok:
                    finished.append(beam)
            else:
                live.append(beam)
    if not finished:
        raise NoValidSequence("no sequence satisfies the constraints")
    best = min(finished, key=Beam.key)
    return DecodeResult(best.tokens, best.score, stats)


def _child_store(parent: ConstraintStore, seq: tuple[Token, ...], cs: list[Constraint],
                 dctx: DecodeContext, cfg: DecodeConfig, cache: PrefixCache | None,
                 stats: DecodeStats) -> ConstraintStore:
    if cache is not None:
        hit = cache.get(seq)
        if hit is not None:
            stats.cache_hits += 1
            return ConstraintStore.thaw(hit, dctx.solver, budget=cfg.budget)
    store = parent.copy()
    store.push(cs)
    stats.solver_work += store.work
    if cache is not None:
        cache.put(seq, store.freeze())
    return store
