"""Graph query language: parsing, optimization, execution and motif expansion.

Grammar::

    query   := "MATCH" pattern {"," pattern} ["WHERE" pred {"AND" pred}]
               "RETURN" NAME {"," NAME} ["EXPAND" NAME {"," NAME}]
    pattern := nodepat {edgepat nodepat}
    nodepat := "(" NAME [":" KIND] ["{" NAME "=" STRING "}"] ")"
    edgepat := "-[" ":" REL ["*" INT ".." INT] "]" ("->" | "-")
             | "<-[" ":" REL "]" "-"
    pred    := NAME "." NAME "=" STRING

Matching uses homomorphism semantics (distinct variables may bind the same
node) and walk semantics for bounded repetition.
"""

from __future__ import annotations

import json
import re
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field, replace
from pathlib import Path

from .graph import KINDS, RELS, KnowledgeGraph, Node

ATTRIBUTES = ("name", "kind", "visibility", "module", "terminal", "provenance")
MAX_REPEAT = 4
OUT, IN, BOTH = "out", "in", "both"


class QuerySyntaxError(ValueError):
    def __init__(self, position: int, expected: str):
        self.position = position
        self.expected = expected
        super().__init__(f"position {position}: expected {expected}")


class UnknownMotif(KeyError):
    pass


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Exists:
    """Semi-join check: the anchor has a walk along ``rel`` to some node satisfying ``kind``/``props``."""

    rel: str
    direction: str
    min: int
    max: int
    kind: str | None = None
    props: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class NodePat:
    var: str
    kind: str | None = None
    props: tuple[tuple[str, str], ...] = ()
    exists: tuple[Exists, ...] = ()


@dataclass(frozen=True)
class EdgePat:
    rel: str
    direction: str = OUT
    min: int = 1
    max: int = 1


@dataclass(frozen=True)
class Pattern:
    nodes: tuple[NodePat, ...]
    edges: tuple[EdgePat, ...] = ()


@dataclass(frozen=True)
class Pred:
    var: str
    attr: str
    value: str


@dataclass(frozen=True)
class Query:
    patterns: tuple[Pattern, ...]
    where: tuple[Pred, ...] = ()
    returns: tuple[str, ...] = ()
    expand: tuple[str, ...] = ()

    def variables(self) -> set[str]:
        return {n.var for p in self.patterns for n in p.nodes}

    def hop_depth(self) -> int:
        return sum(e.max for p in self.patterns for e in p.edges) + sum(
            x.max for p in self.patterns for n in p.nodes for x in n.exists)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<arrow_in><-\[)
  | (?P<edge_open>-\[)
  | (?P<edge_out>\]->)
  | (?P<edge_end>\]-)
  | (?P<dotdot>\.\.)
  | (?P<int>[0-9]+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[(){}:=,.*\]])
""", re.VERBOSE)

KEYWORDS = ("MATCH", "WHERE", "AND", "RETURN", "EXPAND")


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int


def _lex(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise QuerySyntaxError(pos, "a token")
        kind = m.lastgroup
        assert kind is not None
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), pos))
        pos = m.end()
    toks.append(_Tok("eof", "", len(text)))
    return toks


def _unescape(raw: str) -> str:
    return re.sub(r"\\(.)", lambda m: {"n": "\n", "t": "\t"}.get(m.group(1), m.group(1)), raw[1:-1])


class _QueryParser:
    def __init__(self, text: str):
        self.toks = _lex(text)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text: str) -> _Tok:
        t = self.tok
        if t.text != text or t.kind == "string":
            raise QuerySyntaxError(t.pos, repr(text))
        return self.take()

    def name(self, what: str = "a name") -> str:
        t = self.tok
        if t.kind != "name" or t.text in KEYWORDS:
            raise QuerySyntaxError(t.pos, what)
        return self.take().text

    def keyword(self, kw: str) -> bool:
        if self.tok.kind == "name" and self.tok.text == kw:
            self.take()
            return True
        return False

    def string(self) -> str:
        t = self.tok
        if t.kind != "string":
            raise QuerySyntaxError(t.pos, "a string literal")
        return _unescape(self.take().text)

    def integer(self) -> int:
        t = self.tok
        if t.kind != "int":
            raise QuerySyntaxError(t.pos, "an integer")
        return int(self.take().text)

    def parse(self) -> Query:
        if not self.keyword("MATCH"):
            raise QuerySyntaxError(self.tok.pos, "'MATCH'")
        patterns = [self.pattern()]
        while self.tok.text == ",":
            self.take()
            patterns.append(self.pattern())
        where = []
        if self.keyword("WHERE"):
            where.append(self.pred())
            while self.keyword("AND"):
                where.append(self.pred())
        if not self.keyword("RETURN"):
            raise QuerySyntaxError(self.tok.pos, "'RETURN'")
        ret_pos = [self.tok.pos]
        returns = [self.name("a variable")]
        while self.tok.text == ",":
            self.take()
            ret_pos.append(self.tok.pos)
            returns.append(self.name("a variable"))
        expand = []
        if self.keyword("EXPAND"):
            expand.append(self.name("a motif name"))
            while self.tok.text == ",":
                self.take()
                expand.append(self.name("a motif name"))
        if self.tok.kind != "eof":
            raise QuerySyntaxError(self.tok.pos, "end of query")
        q = Query(tuple(patterns), tuple(where), tuple(returns), tuple(expand))
        bound = q.variables()
        for r, pos in zip(returns, ret_pos):
            if r not in bound:
                raise QuerySyntaxError(pos, f"a bound variable (got {r!r})")
        for p in where:
            if p.var not in bound:
                raise QuerySyntaxError(0, f"a bound variable in WHERE (got {p.var!r})")
        return q

    def pattern(self) -> Pattern:
        nodes = [self.nodepat()]
        edges = []
        while self.tok.kind in ("edge_open", "arrow_in"):
            edges.append(self.edgepat())
            nodes.append(self.nodepat())
        return Pattern(tuple(nodes), tuple(edges))

    def nodepat(self) -> NodePat:
        self.expect("(")
        var = self.name("a variable")
        kind = None
        props = ()
        if self.tok.text == ":":
            self.take()
            t = self.tok
            kind = self.name("a node kind")
            if kind not in KINDS:
                raise QuerySyntaxError(t.pos, f"one of {', '.join(KINDS)}")
        if self.tok.text == "{":
            self.take()
            t = self.tok
            attr = self.name("an attribute")
            if attr not in ATTRIBUTES:
                raise QuerySyntaxError(t.pos, f"one of {', '.join(ATTRIBUTES)}")
            self.expect("=")
            props = ((attr, self.string()),)
            self.expect("}")
        self.expect(")")
        return NodePat(var, kind, props)

    def rel(self) -> str:
        self.expect(":")
        t = self.tok
        rel = self.name("a relation")
        if rel not in RELS:
            raise QuerySyntaxError(t.pos, f"one of {', '.join(RELS)}")
        return rel

    def edgepat(self) -> EdgePat:
        if self.tok.kind == "arrow_in":
            self.take()
            rel = self.rel()
            if self.tok.kind != "edge_end":
                raise QuerySyntaxError(self.tok.pos, "']-'")
            self.take()
            return EdgePat(rel, IN)
        self.take()
        rel = self.rel()
        lo = hi = 1
        if self.tok.text == "*":
            self.take()
            t = self.tok
            lo = self.integer()
            if self.tok.kind != "dotdot":
                raise QuerySyntaxError(self.tok.pos, "'..'")
            self.take()
            hi = self.integer()
            if not 1 <= lo <= hi <= MAX_REPEAT:
                raise QuerySyntaxError(t.pos, f"bounds with 1 <= min <= max <= {MAX_REPEAT}")
        if self.tok.kind == "edge_out":
            self.take()
            return EdgePat(rel, OUT, lo, hi)
        if self.tok.kind == "edge_end":
            self.take()
            return EdgePat(rel, BOTH, lo, hi)
        raise QuerySyntaxError(self.tok.pos, "']->' or ']-'")

    def pred(self) -> Pred:
        var = self.name("a variable")
        self.expect(".")
        t = self.tok
        attr = self.name("an attribute")
        if attr not in ATTRIBUTES:
            raise QuerySyntaxError(t.pos, f"one of {', '.join(ATTRIBUTES)}")
        self.expect("=")
        return Pred(var, attr, self.string())


def parse_query(text: str) -> Query:
    return _QueryParser(text).parse()


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def format_query(q: Query) -> str:
    """Render a query in surface syntax (semi-join checks are not expressible and must be absent)."""
    def node(n: NodePat) -> str:
        if n.exists:
            raise ValueError("optimized queries with semi-join checks have no surface form")
        s = n.var + (f":{n.kind}" if n.kind else "")
        if len(n.props) > 1:
            raise ValueError("at most one inline property per node pattern")
        if n.props:
            s += " {" + f"{n.props[0][0]}={_quote(n.props[0][1])}" + "}"
        return f"({s})"

    def edge(e: EdgePat) -> str:
        rep = "" if (e.min, e.max) == (1, 1) else f"*{e.min}..{e.max}"
        if e.direction == IN:
            return f"<-[:{e.rel}]-"
        return f"-[:{e.rel}{rep}]" + ("->" if e.direction == OUT else "-")

    parts = []
    for p in q.patterns:
        s = node(p.nodes[0])
        for e, n in zip(p.edges, p.nodes[1:]):
            s += edge(e) + node(n)
        parts.append(s)
    out = "MATCH " + ", ".join(parts)
    if q.where:
        out += " WHERE " + " AND ".join(f"{p.var}.{p.attr}={_quote(p.value)}" for p in q.where)
    out += " RETURN " + ", ".join(q.returns)
    if q.expand:
        out += " EXPAND " + ", ".join(q.expand)
    return out


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

def optimize(q: Query) -> Query:
    """Predicate pushdown, then traversal elimination into semi-join checks."""
    patterns = [list(p.nodes) for p in q.patterns]
    edges = [list(p.edges) for p in q.patterns]
    # pushdown: attach each predicate to the first occurrence of its variable
    for pred in q.where:
        for nodes in patterns:
            hit = next((i for i, n in enumerate(nodes) if n.var == pred.var), None)
            if hit is not None:
                n = nodes[hit]
                if (pred.attr, pred.value) not in n.props:
                    nodes[hit] = replace(n, props=n.props + ((pred.attr, pred.value),))
                break
    # elimination: peel chain ends whose variable occurs nowhere else
    changed = True
    while changed:
        changed = False
        counts: dict[str, int] = {}
        for nodes in patterns:
            for n in nodes:
                counts[n.var] = counts.get(n.var, 0) + 1
        for pi, nodes in enumerate(patterns):
            es = edges[pi]
            if not es:
                continue
            last = nodes[-1]
            if counts[last.var] == 1 and last.var not in q.returns:
                e = es[-1]
                check = Exists(e.rel, e.direction, e.min, e.max, last.kind, last.props)
                if not last.exists:
                    nodes.pop()
                    es.pop()
                    nodes[-1] = replace(nodes[-1], exists=nodes[-1].exists + (check,))
                    changed = True
                    continue
            first = nodes[0]
            if counts[first.var] == 1 and first.var not in q.returns and not first.exists:
                e = es[0]
                rev = {OUT: IN, IN: OUT, BOTH: BOTH}[e.direction]
                check = Exists(e.rel, rev, e.min, e.max, first.kind, first.props)
                nodes.pop(0)
                es.pop(0)
                nodes[0] = replace(nodes[0], exists=nodes[0].exists + (check,))
                changed = True
    new_patterns = tuple(Pattern(tuple(n), tuple(e)) for n, e in zip(patterns, edges))
    return Query(new_patterns, (), q.returns, q.expand)


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------

@dataclass
class ResultSubgraph:
    nodes: frozenset[int] = frozenset()
    edges: frozenset[tuple[int, str, int]] = frozenset()
    bindings: dict[str, frozenset[int]] = field(default_factory=dict)
    visited: int = 0

    @property
    def size(self) -> int:
        return len(self.nodes) + len(self.edges)

    def names(self, g: KnowledgeGraph) -> frozenset[str]:
        return frozenset(g.nodes[n].name for n in self.nodes)

    def edge_names(self, g: KnowledgeGraph) -> frozenset[tuple[str, str, str]]:
        return frozenset(g.edge_names(e) for e in self.edges)


def node_attr(n: Node, attr: str) -> str:
    if attr == "name":
        return n.name
    if attr == "kind":
        return n.kind
    if attr == "visibility":
        return n.visibility
    if attr == "module":
        return n.module
    if attr == "terminal":
        return n.terminal
    if attr == "provenance":
        return n.provenance
    raise KeyError(attr)


class _Executor:
    def __init__(self, g: KnowledgeGraph, touch: Callable[[str], object] | None):
        self.g = g
        self.touch = touch
        self.touched: set[int] = set()
        self.visited: set[int] = set()

    def _touch(self, nid: int) -> None:
        if self.touch is not None and nid not in self.touched:
            self.touched.add(nid)
            self.touch(self.g.nodes[nid].name)

    def neighbors(self, nid: int, rel: str, direction: str) -> set[int]:
        self._touch(nid)
        self.visited.add(nid)
        g = self.g
        if direction == OUT:
            return set(g.out(nid, rel))
        if direction == IN:
            return set(g.in_(nid, rel))
        return set(g.out(nid, rel)) | set(g.in_(nid, rel))

    def reach(self, nid: int, rel: str, direction: str, lo: int, hi: int) -> set[int]:
        out: set[int] = set()
        frontier = {nid}
        for depth in range(1, hi + 1):
            nxt: set[int] = set()
            for x in frontier:
                nxt |= self.neighbors(x, rel, direction)
            frontier = nxt
            if depth >= lo:
                out |= frontier
            if not frontier:
                break
        return out

    def node_ok(self, nid: int, kind: str | None, props: Iterable[tuple[str, str]]) -> bool:
        n = self.g.nodes[nid]
        if kind is not None and n.kind != kind:
            return False
        return all(node_attr(n, a) == v for a, v in props)

    def exists_ok(self, nid: int, check: Exists) -> bool:
        frontier = {nid}
        for depth in range(1, check.max + 1):
            nxt: set[int] = set()
            for x in frontier:
                nxt |= self.neighbors(x, check.rel, check.direction)
            frontier = nxt
            if depth >= check.min and any(self.node_ok(y, check.kind, check.props) for y in frontier):
                return True
            if not frontier:
                break
        return False

    def domain(self, pats: list[NodePat]) -> set[int]:
        g = self.g
        props = [p for n in pats for p in n.props]
        kinds = {n.kind for n in pats if n.kind is not None}
        if len(kinds) > 1:
            return set()
        kind = next(iter(kinds), None)
        names = [v for a, v in props if a == "name"]
        if names:
            nid = g.by_name.get(names[0])
            seed = {nid} if nid is not None else set()
        elif kind is not None:
            seed = set(g.nodes_of_kind(kind))
        else:
            seed = set(g.nodes)
        out = set()
        for nid in seed:
            if self.node_ok(nid, kind, props) and all(self.exists_ok(nid, x) for n in pats for x in n.exists):
                out.add(nid)
        return out

    def run(self, q: Query) -> ResultSubgraph:
        occurrences: dict[str, list[NodePat]] = {}
        constraints: list[tuple[str, EdgePat, str]] = []
        for p in q.patterns:
            for n in p.nodes:
                occurrences.setdefault(n.var, []).append(n)
            for e, a, b in zip(p.edges, p.nodes, p.nodes[1:]):
                constraints.append((a.var, e, b.var))
        for pred in q.where:
            occurrences[pred.var].append(NodePat(pred.var, None, ((pred.attr, pred.value),)))
        domains = {v: self.domain(pats) for v, pats in occurrences.items()}
        variables = sorted(domains, key=lambda v: (len(domains[v]), v))
        if any(not domains[v] for v in variables):
            return self.result(set(), {v: set() for v in q.returns})
        order: list[str] = []
        remaining = set(variables)
        while remaining:
            linked = [v for v in remaining if any(
                (a == v and b in order) or (b == v and a in order) for a, _, b in constraints)]
            pool = linked or list(remaining)
            v = min(pool, key=lambda x: (len(domains[x]), x))
            order.append(v)
            remaining.discard(v)
        reach_cache: dict[tuple[int, EdgePat, bool], set[int]] = {}

        def reach_from(nid: int, e: EdgePat, forward: bool) -> set[int]:
            key = (nid, e, forward)
            hit = reach_cache.get(key)
            if hit is None:
                d = e.direction if forward else {OUT: IN, IN: OUT, BOTH: BOTH}[e.direction]
                hit = self.reach(nid, e.rel, d, e.min, e.max)
                reach_cache[key] = hit
            return hit

        bound: dict[str, set[int]] = {v: set() for v in q.returns}
        binding: dict[str, int] = {}

        def extend(i: int) -> None:
            if i == len(order):
                for v in q.returns:
                    bound[v].add(binding[v])
                return
            v = order[i]
            cands = domains[v]
            for a, e, b in constraints:
                if a in binding and b == v:
                    cands = cands & reach_from(binding[a], e, True)
                elif b in binding and a == v:
                    cands = cands & reach_from(binding[b], e, False)
            for c in sorted(cands):
                binding[v] = c
                ok = all(c in reach_from(c, e, True) for a, e, b in constraints if a == v and b == v)
                if ok:
                    extend(i + 1)
                del binding[v]

        extend(0)
        nodes = set().union(*bound.values()) if bound else set()
        return self.result(nodes, bound)

    def result(self, nodes: set[int], bound: dict[str, set[int]]) -> ResultSubgraph:
        edges = set()
        for nid in sorted(nodes):
            self._touch(nid)
        for nid in nodes:
            for key in self.g.out_edges(nid):
                if key[2] in nodes:
                    edges.add(key)
        return ResultSubgraph(frozenset(nodes), frozenset(edges),
                              {v: frozenset(s) for v, s in bound.items()}, len(self.visited))


def execute(q: Query, g: KnowledgeGraph, touch: Callable[[str], object] | None = None,
            motifs: dict[str, Motif] | None = None) -> ResultSubgraph:
    """Run a query; ``touch`` is called with a node name before its adjacency is read."""
    ex = _Executor(g, touch)
    res = ex.run(q)
    if q.expand:
        res = expand_motifs(res, [_motif(motifs or {}, m) for m in q.expand], g, touch)
    return res


def _motif(motifs: dict[str, Motif], name: str) -> Motif:
    if name not in motifs:
        raise UnknownMotif(name)
    return motifs[name]


# ---------------------------------------------------------------------------
# Motifs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Motif:
    name: str
    start: str
    steps: tuple[tuple[str, str, str], ...]  # (relation, direction, kind)

    def __post_init__(self) -> None:
        if not 1 <= len(self.steps) <= 3:
            raise ValueError(f"motif {self.name}: chain length must be 1..3")
        if self.start not in KINDS:
            raise ValueError(f"motif {self.name}: unknown kind {self.start}")
        for rel, direction, kind in self.steps:
            if rel not in RELS or direction not in (OUT, IN, BOTH) or kind not in KINDS:
                raise ValueError(f"motif {self.name}: bad step {(rel, direction, kind)}")


def load_motifs(source: str | Path | list) -> dict[str, Motif]:
    """Motifs from JSON: a list of ``{"name", "start", "steps": [[rel, dir, kind], ...]}``."""
    data = source if isinstance(source, list) else json.loads(Path(source).read_text(encoding="utf-8"))
    out = {}
    for m in data:
        motif = Motif(m["name"], m["start"], tuple(tuple(s) for s in m["steps"]))
        out[motif.name] = motif
    return out


def expand_motifs(result: ResultSubgraph, motifs: Iterable[Motif], g: KnowledgeGraph,
                  touch: Callable[[str], object] | None = None) -> ResultSubgraph:
    """Add every node on a complete motif chain anchored at a result node."""
    ex = _Executor(g, touch)
    added: set[int] = set()
    for m in motifs:
        for anchor in sorted(result.nodes):
            if g.nodes[anchor].kind != m.start:
                continue
            paths = [[anchor]]
            for rel, direction, kind in m.steps:
                nxt = []
                for path in paths:
                    for y in sorted(ex.neighbors(path[-1], rel, direction)):
                        if g.nodes[y].kind == kind:
                            nxt.append(path + [y])
                paths = nxt
            for path in paths:
                added.update(path)
    if not added - result.nodes:
        return result
    nodes = set(result.nodes) | added
    full = ex.result(nodes, {})
    return ResultSubgraph(full.nodes, full.edges, dict(result.bindings), result.visited + full.visited)
