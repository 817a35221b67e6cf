"""Independent reference implementations used as test oracles.

Each oracle is deliberately naive: brute-force enumeration over a small
domain, written without reusing the code it checks.
"""

from __future__ import annotations

import fnmatch
import itertools

from repograph.constraints import ArchForbid, ArityEq, RequiredArg, SolverContext, TVar, TypeSub, Visible
from repograph.decoder import END, analyze, is_legal, rank_key
from repograph.graph import KnowledgeGraph
from repograph.query import BOTH, IN, OUT, Query

# ---------------------------------------------------------------------------
# Constraint satisfiability
# ---------------------------------------------------------------------------


def _ground_ok(c, ctx: SolverContext) -> bool:
    if isinstance(c, (ArityEq, RequiredArg)):
        sig = ctx.signatures.get(c.callee)
        if sig is None:
            return True
        names = [p.name for p in sig.params]
        passed = set(names[:c.n]) | set(c.kwnames)
        if isinstance(c, RequiredArg):
            return c.param not in names or c.param in passed
        required = {p.name for p in sig.params if not p.has_default}
        return c.n <= len(names) and set(c.kwnames) <= set(names[c.n:]) and required <= passed
    if isinstance(c, Visible):
        parts = c.name.split(".")
        for i, part in enumerate(parts):
            if part.startswith("_") and not (part.startswith("__") and part.endswith("__")):
                owner = ".".join(parts[:i])
                return owner != "" and (c.scope == owner or c.scope.startswith(owner + "."))
        return True
    if isinstance(c, ArchForbid):
        return not (fnmatch.fnmatchcase(c.src, c.src_glob) and fnmatch.fnmatchcase(c.dst, c.dst_glob))
    raise TypeError(c)


def brute_sat(constraints, ctx: SolverContext) -> bool:
    """Try every assignment of types to variables.

    A subtype constraint between two variables requires equal types; every
    other type constraint is checked with the lattice order.
    """
    cs = list(constraints)
    if not all(_ground_ok(c, ctx) for c in cs if not isinstance(c, TypeSub)):
        return False
    subs = [c for c in cs if isinstance(c, TypeSub)]
    tvars = sorted({t for c in subs for t in (c.sub, c.sup) if isinstance(t, TVar)}, key=lambda v: v.id)
    consts = {t for c in subs for t in (c.sub, c.sup) if not isinstance(t, TVar)}
    domain = sorted(set(ctx.universe) | consts)
    leq = ctx.lattice.leq
    for combo in itertools.product(domain, repeat=len(tvars)):
        env = dict(zip(tvars, combo))
        ok = True
        for c in subs:
            a = env.get(c.sub, c.sub)
            b = env.get(c.sup, c.sup)
            if isinstance(c.sub, TVar) and isinstance(c.sup, TVar):
                ok = a == b
            else:
                ok = leq(a, b)  # type: ignore[arg-type]
            if not ok:
                break
        if ok:
            return True
    return False


def first_violation(constraints, ctx: SolverContext):
    """The constraint whose addition first makes the list unsatisfiable."""
    cs = list(constraints)
    for i in range(len(cs)):
        if not brute_sat(cs[:i + 1], ctx):
            return cs[i]
    return None


# ---------------------------------------------------------------------------
# Beam search
# ---------------------------------------------------------------------------


def textbook_beam(dctx, model, k: int, max_len: int):
    """Plain beam search; every prefix is re-checked from scratch.

    Returns the best finished sequence or None.
    """
    beams = [((), 0.0)]
    finished = []
    for _ in range(max_len):
        if not beams:
            break
        pool = []
        for seq, score in beams:
            state, _ = analyze(seq, dctx)
            for t, lp in model.next_candidates(seq):
                if not is_legal(state, t):
                    continue
                ext = seq + (t,)
                _, cs = analyze(ext, dctx)
                if brute_sat(cs, dctx.solver):
                    pool.append((score + lp, ext))
        pool.sort(key=lambda x: rank_key(*x))
        beams = []
        for score, seq in pool[:k]:
            (finished if seq[-1].kind == END else beams).append((seq, score))
    if not finished:
        return None
    return min(finished, key=lambda x: rank_key(x[1], x[0]))[0]


def enumerate_decodes(case):
    """Prefixes and valid complete sequences, decided by the brute-force oracle."""
    prefixes: dict[int, list] = {}
    valid = []

    def walk(seq, score):
        if len(seq) == case.cfg.max_len:
            return
        state, _ = analyze(seq, case.dctx)
        for t, lp in case.model.next_candidates(seq):
            if not is_legal(state, t):
                continue
            ext = seq + (t,)
            sat = brute_sat(analyze(ext, case.dctx)[1], case.dctx.solver)
            prefixes.setdefault(len(ext), []).append((score + lp, ext, sat))
            if t.kind == END:
                if sat:
                    valid.append((score + lp, ext))
            else:
                walk(ext, score + lp)

    walk((), 0.0)
    return prefixes, valid


# ---------------------------------------------------------------------------
# Query matching
# ---------------------------------------------------------------------------


def _attr(g: KnowledgeGraph, nid: int, attr: str) -> str:
    n = g.nodes[nid]
    if attr == "name":
        return n.name
    if attr == "kind":
        return n.kind
    if attr == "visibility":
        return "priv" if n.name.rsplit(".", 1)[-1].startswith("_") else "pub"
    if attr == "module":
        return n.name if n.kind == "FILE" else n.name.rsplit(".", 1)[0]
    if attr == "terminal":
        return n.name.rsplit(".", 1)[-1]
    if attr == "provenance":
        return n.provenance
    raise KeyError(attr)


def _walk_ends(g: KnowledgeGraph, start: int, rel: str, direction: str, lo: int, hi: int) -> set[int]:
    steps = []
    for s, r, d in g.edges:
        if r != rel:
            continue
        if direction in (OUT, BOTH):
            steps.append((s, d))
        if direction in (IN, BOTH):
            steps.append((d, s))
    out = set()
    layer = {start}
    for length in range(1, hi + 1):
        layer = {b for a, b in steps if a in layer}
        if length >= lo:
            out |= layer
    return out


def brute_match(q: Query, g: KnowledgeGraph) -> tuple[frozenset[int], frozenset[tuple[int, str, int]]]:
    """Result nodes and induced edges by enumerating every variable assignment."""
    variables = sorted({n.var for p in q.patterns for n in p.nodes})
    nodes = sorted(g.nodes)
    hits: set[int] = set()
    memo: dict = {}
    for combo in itertools.product(nodes, repeat=len(variables)):
        env = dict(zip(variables, combo))
        if not _matches(q, g, env, memo):
            continue
        hits |= {env[v] for v in q.returns}
    edges = frozenset(e for e in g.edges if e[0] in hits and e[2] in hits)
    return frozenset(hits), edges


def _matches(q: Query, g: KnowledgeGraph, env: dict[str, int], memo: dict) -> bool:
    for p in q.patterns:
        for n in p.nodes:
            nid = env[n.var]
            if n.kind is not None and g.nodes[nid].kind != n.kind:
                return False
            if any(_attr(g, nid, a) != v for a, v in n.props):
                return False
        for e, a, b in zip(p.edges, p.nodes, p.nodes[1:]):
            key = (env[a.var], e)
            if key not in memo:
                memo[key] = _walk_ends(g, env[a.var], e.rel, e.direction, e.min, e.max)
            if env[b.var] not in memo[key]:
                return False
    return all(_attr(g, env[pr.var], pr.attr) == pr.value for pr in q.where)
