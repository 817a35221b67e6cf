"""Static extraction, dynamic trace ingestion and static/dynamic reconciliation.

Extraction runs in three passes. Pass (a) is per file: parse, declare
entities, emit DEFINES edges and record *symbolic references* (unresolved
call/import/type/mutation sites). Pass (b)/(c) resolves every symbolic
reference against a snapshot-wide symbol table. Each table lookup is
reported to a dependency set, which lets incremental maintenance re-resolve
exactly the references whose lookups changed.
"""

from __future__ import annotations

import json
from collections import defaultdict
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field

from .entities import (
    API, CLASS, FILE, FUNC, TEST, VAR,
    EntityDecl, ModuleScope, Signature, ParamSig,
    canonical_hash, entity_slices, enumerate_entities,
)
from .graph import (
    CALLS, DEFINES, DYNAMIC, IMPORTS, INSTANCEOF, MERGED, MUTATES, RETURNS, STATIC,
    KnowledgeGraph,
)
from .lattice import TypeLattice, is_builtin
from .minipy import (
    Assign, Attribute, BinOp, Call, ClassDef, ExprStmt, For, FuncDef, If,
    ListExpr, Module, Name, ParseError, Return, SourceFile, While, parse_file,
)

ALLOWED_TARGETS = {
    CALLS: frozenset({FUNC, CLASS, TEST}),
    IMPORTS: frozenset({FUNC, CLASS, TEST, VAR, FILE}),
    INSTANCEOF: frozenset({CLASS}),
    MUTATES: frozenset({VAR, CLASS}),
    RETURNS: frozenset({CLASS}),
}

EVENT_RELS = {"call": CALLS, "instance": INSTANCEOF, "mutate": MUTATES}


# ---------------------------------------------------------------------------
# Pass (a): per-file facts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SymRef:
    """An unresolved reference from a source entity.

    ``strategy`` selects the lookup: ``name`` (a qualified target, with an
    optional importing module whose absence makes the target external),
    ``module`` (an imported module), ``mro`` (method lookup from a class)
    or ``any`` (every class method of that name, a polymorphic candidate).
    """

    rel: str
    strategy: str
    target: str
    via: str | None = None
    method: str | None = None

    @property
    def terminal(self) -> str:
        if self.strategy in ("mro", "any"):
            assert self.method is not None
            return self.method
        return self.target.rsplit(".", 1)[-1]


@dataclass
class FileFacts:
    path: str
    module: str
    ast: Module | None
    error: ParseError | None
    decls: list[EntityDecl]
    hashes: dict[str, int]
    defines: list[tuple[str, str]]
    refs: dict[str, tuple[SymRef, ...]]
    methods: tuple[tuple[str, str], ...] = ()

    @property
    def names(self) -> list[str]:
        return [d.qualified_name for d in self.decls]


def _module_or_error(file: SourceFile) -> tuple[Module | None, ParseError | None]:
    try:
        return parse_file(file), None
    except ParseError as exc:
        return None, exc


def extract_file(file: SourceFile) -> FileFacts:
    module = file.module
    ast, err = _module_or_error(file)
    if ast is None:
        decl = EntityDecl(module, FILE)
        return FileFacts(file.path, module, None, err, [decl], {module: 0}, [], {})
    decls = enumerate_entities(ast)
    slices = entity_slices(ast)
    hashes = {qn: canonical_hash(qn, slices[qn]) for qn in slices}
    defines: list[tuple[str, str]] = []
    refs: dict[str, tuple[SymRef, ...]] = {}
    scope = ModuleScope(ast)
    collector = _RefCollector(scope)
    file_refs: list[SymRef] = []
    for item in ast.items:
        if isinstance(item, FuncDef):
            qn = f"{module}.{item.name}"
            defines.append((module, qn))
            refs[qn] = collector.function(item, None)
        elif isinstance(item, ClassDef):
            qn = f"{module}.{item.name}"
            defines.append((module, qn))
            class_refs: list[SymRef] = []
            for mem in item.members:
                if isinstance(mem, FuncDef):
                    mqn = f"{qn}.{mem.name}"
                    defines.append((qn, mqn))
                    refs[mqn] = collector.function(mem, qn)
                elif isinstance(mem, Assign):
                    class_refs.extend(collector.expr_refs(mem.value, frozenset(), {}, None))
            refs[qn] = _dedupe(class_refs)
        elif isinstance(item, Assign):
            assert isinstance(item.target, Name)
            qn = f"{module}.{item.target.id}"
            defines.append((module, qn))
            vrefs = collector.expr_refs(item.value, frozenset(), {}, None)
            if isinstance(item.value, Call):
                target = collector.static_target(item.value.func, frozenset(), None)
                if target is not None:
                    vrefs.append(SymRef(INSTANCEOF, "name", target[0], target[1]))
            refs[qn] = _dedupe(vrefs)
        else:  # Import
            if item.names is None:
                file_refs.append(SymRef(IMPORTS, "module", item.module))
            else:
                for n in item.names:
                    file_refs.append(SymRef(IMPORTS, "name", f"{item.module}.{n}", item.module))
    refs[module] = _dedupe(file_refs)
    kinds = {d.qualified_name: d.kind for d in decls}
    methods = tuple(
        tuple(d.qualified_name.rsplit(".", 1)) for d in decls
        if d.kind in (FUNC, TEST) and kinds.get(d.qualified_name.rsplit(".", 1)[0]) == CLASS
    )
    return FileFacts(file.path, module, ast, None, decls, hashes, defines, refs, methods)


def _dedupe(refs: Iterable[SymRef]) -> tuple[SymRef, ...]:
    seen: dict[SymRef, None] = {}
    for r in refs:
        seen.setdefault(r, None)
    return tuple(seen)


class _RefCollector:
    def __init__(self, scope: ModuleScope):
        self.scope = scope

    def function(self, fn: FuncDef, cls: str | None) -> tuple[SymRef, ...]:
        locals_: set[str] = {p.name for p in fn.params}
        _assigned_names(fn.body, locals_)
        typed = {p.name: self.scope.qualify_type(p.type) for p in fn.params if p.type is not None}
        if cls is not None and fn.params and fn.params[0].name == "self":
            typed["self"] = cls
        out: list[SymRef] = []
        rt = self.scope.qualify_type(fn.returns)
        if fn.returns is not None and not is_builtin(rt):
            out.append(SymRef(RETURNS, "name", rt))
        frozen = frozenset(locals_)
        for st in _walk_stmts(fn.body):
            if isinstance(st, Assign):
                out.extend(self.mutation(st.target, frozen, cls, fn))
                out.extend(self.expr_refs(st.value, frozen, typed, cls))
                if isinstance(st.target, Attribute):
                    out.extend(self.expr_refs(st.target.value, frozen, typed, cls))
            elif isinstance(st, (Return, ExprStmt)):
                if st.value is not None:
                    out.extend(self.expr_refs(st.value, frozen, typed, cls))
            elif isinstance(st, (If, While)):
                out.extend(self.expr_refs(st.test, frozen, typed, cls))
            elif isinstance(st, For):
                out.extend(self.expr_refs(st.iter, frozen, typed, cls))
        return _dedupe(out)

    def mutation(self, target, locals_: frozenset[str], cls: str | None, fn: FuncDef) -> list[SymRef]:
        if isinstance(target, Name):
            if self.scope.top.get(target.id) == VAR and target.id not in {p.name for p in fn.params}:
                return [SymRef(MUTATES, "name", f"{self.scope.module}.{target.id}")]
            return []
        dotted = _dotted(target)
        assert dotted is not None
        head = dotted.split(".", 1)[0]
        if head == "self" and cls is not None and "self" in locals_:
            return [SymRef(MUTATES, "name", cls)]
        if head in locals_:
            return []
        if self.scope.top.get(head) == VAR:
            return [SymRef(MUTATES, "name", f"{self.scope.module}.{head}")]
        if head in self.scope.imported:
            q = self.scope.imported[head]
            return [SymRef(MUTATES, "name", q, q.rsplit(".", 1)[0])]
        mod = _module_prefix(dotted, self.scope)
        if mod is not None and mod != dotted:
            owner = dotted[len(mod) + 1:].split(".", 1)[0]
            return [SymRef(MUTATES, "name", f"{mod}.{owner}", mod)]
        return []

    def static_target(self, func, locals_: frozenset[str], cls: str | None) -> tuple[str, str | None] | None:
        """Qualified target of a call expression whose callee is a plain dotted name."""
        dotted = _dotted(func)
        if dotted is None:
            return None
        head = dotted.split(".", 1)[0]
        if head in locals_:
            return None
        if head in self.scope.top:
            if self.scope.top[head] == VAR and "." in dotted:
                return None
            return (f"{self.scope.module}.{dotted}", None)
        if head in self.scope.imported:
            base = self.scope.imported[head]
            rest = dotted[len(head):]
            return (base + rest, base.rsplit(".", 1)[0])
        mod = _module_prefix(dotted, self.scope)
        if mod is not None and dotted != mod:
            return (dotted, mod)
        if "." not in dotted:
            return (f"{self.scope.module}.{dotted}", None)
        return None

    def call_refs(self, call: Call, locals_: frozenset[str], typed: dict[str, str], cls: str | None) -> list[SymRef]:
        func = call.func
        target = self.static_target(func, locals_, cls)
        if target is not None:
            return [SymRef(CALLS, "name", target[0], target[1])]
        if isinstance(func, Attribute):
            recv = func.value
            m = func.attr
            if isinstance(recv, Name) and recv.id in typed:
                t = typed[recv.id]
                if t == "Any":
                    return [SymRef(CALLS, "any", "", method=m)]
                if is_builtin(t):
                    return []
                return [SymRef(CALLS, "mro", t, method=m)]
            if isinstance(recv, Name) and recv.id not in locals_ and recv.id not in self.scope.top:
                # attribute of an unknown global: nothing to resolve against
                return []
            return [SymRef(CALLS, "any", "", method=m)]
        return []

    def expr_refs(self, e, locals_: frozenset[str], typed: dict[str, str], cls: str | None) -> list[SymRef]:
        out: list[SymRef] = []
        stack = [e]
        while stack:
            x = stack.pop()
            if isinstance(x, Call):
                out.extend(self.call_refs(x, locals_, typed, cls))
                stack.extend(reversed([x.func, *x.args, *(v for _, v in x.keywords)]))
            elif isinstance(x, Attribute):
                stack.append(x.value)
            elif isinstance(x, BinOp):
                stack.extend([x.right, x.left])
            elif isinstance(x, ListExpr):
                stack.extend(reversed(x.elts))
        return out


def _dotted(e) -> str | None:
    parts = []
    while isinstance(e, Attribute):
        parts.append(e.attr)
        e = e.value
    if not isinstance(e, Name):
        return None
    parts.append(e.id)
    return ".".join(reversed(parts))


def _module_prefix(dotted: str, scope: ModuleScope) -> str | None:
    best = None
    for mod in scope.modules:
        if dotted == mod or dotted.startswith(mod + "."):
            if best is None or len(mod) > len(best):
                best = mod
    return best


def _walk_stmts(body) -> Iterator:
    for st in body:
        yield st
        if isinstance(st, If):
            yield from _walk_stmts(st.body)
            yield from _walk_stmts(st.orelse)
        elif isinstance(st, (While, For)):
            yield from _walk_stmts(st.body)


def _assigned_names(body, out: set[str]) -> None:
    for st in _walk_stmts(body):
        if isinstance(st, Assign) and isinstance(st.target, Name):
            out.add(st.target.id)
        elif isinstance(st, For):
            out.add(st.var.id)


# ---------------------------------------------------------------------------
# Symbol table and resolution
# ---------------------------------------------------------------------------

class SymbolTable:
    """Snapshot-wide declarations, queried through dependency-recording lookups.

    Lookup keys: ``("ent", name)`` (kind and bases of a declared entity),
    ``("meth", m)`` (classes declaring method ``m``) and ``("ns", x)``
    (whether ``x`` is a module or package prefix inside the snapshot).
    A name declared by several files takes the declaration from the first
    path in sorted order.
    """

    def __init__(self) -> None:
        self._decls: dict[str, dict[str, tuple[str, tuple[str, ...]]]] = {}
        self.ents: dict[str, tuple[str, tuple[str, ...]]] = {}
        self.methods: dict[str, dict[str, int]] = {}
        self.modules: dict[str, int] = {}
        self.ns: dict[str, int] = {}

    @classmethod
    def build(cls, facts: Iterable[FileFacts]) -> SymbolTable:
        t = cls()
        for f in facts:
            t.add_file(f)
        return t

    def _refresh(self, name: str) -> None:
        owners = self._decls.get(name)
        if owners:
            self.ents[name] = owners[min(owners)]
        else:
            self._decls.pop(name, None)
            self.ents.pop(name, None)

    def add_file(self, f: FileFacts) -> None:
        self.modules[f.module] = self.modules.get(f.module, 0) + 1
        parts = f.module.split(".")
        for i in range(1, len(parts) + 1):
            p = ".".join(parts[:i])
            self.ns[p] = self.ns.get(p, 0) + 1
        for d in f.decls:
            self._decls.setdefault(d.qualified_name, {})[f.path] = (d.kind, d.bases)
            self._refresh(d.qualified_name)
        for cls_name, m in f.methods:
            bucket = self.methods.setdefault(m, {})
            bucket[cls_name] = bucket.get(cls_name, 0) + 1

    def remove_file(self, f: FileFacts) -> None:
        self.modules[f.module] -= 1
        if not self.modules[f.module]:
            del self.modules[f.module]
        parts = f.module.split(".")
        for i in range(1, len(parts) + 1):
            p = ".".join(parts[:i])
            self.ns[p] -= 1
            if not self.ns[p]:
                del self.ns[p]
        for d in f.decls:
            owners = self._decls.get(d.qualified_name)
            if owners is not None:
                owners.pop(f.path, None)
            self._refresh(d.qualified_name)
        for cls_name, m in f.methods:
            bucket = self.methods[m]
            bucket[cls_name] -= 1
            if not bucket[cls_name]:
                del bucket[cls_name]
            if not bucket:
                del self.methods[m]

    def entity(self, name: str, deps: set | None) -> tuple[str, tuple[str, ...]] | None:
        if deps is not None:
            deps.add(("ent", name))
        return self.ents.get(name)

    def classes_with(self, m: str, deps: set | None) -> list[str]:
        if deps is not None:
            deps.add(("meth", m))
        return sorted(self.methods.get(m, ()))

    def in_namespace(self, x: str, deps: set | None) -> bool:
        if deps is not None:
            deps.add(("ns", x))
        return x in self.ns

    def key_value(self, key: tuple[str, str]):
        kind, arg = key
        if kind == "ent":
            return self.ents.get(arg)
        if kind == "meth":
            return frozenset(self.methods.get(arg, ()))
        return arg in self.ns

    def lattice(self) -> TypeLattice:
        return TypeLattice({n: b for n, (k, b) in self.ents.items() if k == CLASS})


@dataclass(frozen=True)
class Resolved:
    rel: str
    dst: str
    candidate: bool = False
    api: bool = False


def resolve_ref(ref: SymRef, table: SymbolTable, deps: set | None = None) -> list[Resolved]:
    allowed = ALLOWED_TARGETS[ref.rel]
    if ref.strategy in ("name", "module"):
        # the namespace lookup is recorded even when the entity exists, so that
        # a change of external status always reaches this reference
        via = ref.target if ref.strategy == "module" else ref.via
        internal = via is None or table.in_namespace(via, deps)
        got = table.entity(ref.target, deps)
        if got is not None:
            return [Resolved(ref.rel, ref.target)] if got[0] in allowed else []
        if not internal:
            return [Resolved(ref.rel, ref.target, api=True)]
        return []
    assert ref.method is not None
    if ref.strategy == "mro":
        hit = _mro_lookup(ref.target, ref.method, table, deps)
        return [Resolved(ref.rel, hit)] if hit is not None else []
    if ref.strategy == "any":
        return [Resolved(ref.rel, f"{c}.{ref.method}", candidate=True)
                for c in table.classes_with(ref.method, deps)]
    raise ValueError(f"unknown strategy {ref.strategy!r}")


def _mro_lookup(cls: str, m: str, table: SymbolTable, deps: set | None) -> str | None:
    # depth-first, left-to-right over declared bases
    seen: set[str] = set()
    stack = [cls]
    while stack:
        c = stack.pop()
        if c in seen:
            continue
        seen.add(c)
        got = table.entity(c, deps)
        if got is None or got[0] != CLASS:
            continue
        meth = table.entity(f"{c}.{m}", deps)
        if meth is not None and meth[0] in (FUNC, TEST):
            return f"{c}.{m}"
        stack.extend(reversed(got[1]))
    return None


def resolve_source(refs: Iterable[SymRef], table: SymbolTable,
                   deps: set | None = None) -> dict[tuple[str, str], Resolved]:
    """Resolve all references of one source entity into its static out-edges."""
    out: dict[tuple[str, str], Resolved] = {}
    for ref in refs:
        for r in resolve_ref(ref, table, deps):
            key = (r.rel, r.dst)
            prev = out.get(key)
            if prev is None:
                out[key] = r
            elif prev.candidate and not r.candidate:
                out[key] = r
    return out


# ---------------------------------------------------------------------------
# Whole-snapshot extraction
# ---------------------------------------------------------------------------

@dataclass
class BuildReport:
    facts: dict[str, FileFacts] = field(default_factory=dict)
    errors: dict[str, ParseError] = field(default_factory=dict)


def extract_static_report(files: Iterable[SourceFile]) -> tuple[KnowledgeGraph, BuildReport]:
    files = sorted(files, key=lambda f: f.path)
    report = BuildReport()
    for f in files:
        facts = extract_file(f)
        report.facts[f.path] = facts
        if facts.error is not None:
            report.errors[f.path] = facts.error
    all_facts = list(report.facts.values())
    table = SymbolTable.build(all_facts)
    g = KnowledgeGraph()
    # (a) declarations and DEFINES
    for facts in all_facts:
        for d in facts.decls:
            if d.qualified_name in g.by_name:
                continue
            g.upsert_decl(d, facts.hashes.get(d.qualified_name, 0))
    for facts in all_facts:
        for s, d in facts.defines:
            g.upsert_edge(g.by_name[s], DEFINES, g.by_name[d])
    # (b)+(c) resolution of intra- and cross-module references
    for facts in all_facts:
        for src in sorted(facts.refs):
            for r in resolve_source(facts.refs[src], table).values():
                if r.api and r.dst not in g.by_name:
                    g.upsert_node(r.dst, API)
                g.upsert_edge(g.by_name[src], r.rel, g.by_name[r.dst], candidate=r.candidate)
    return g, report


def extract_static(files: Iterable[SourceFile]) -> KnowledgeGraph:
    return extract_static_report(files)[0]


# ---------------------------------------------------------------------------
# Dynamic traces
# ---------------------------------------------------------------------------

class MalformedTrace(ValueError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


@dataclass(frozen=True)
class TraceEvent:
    event: str
    caller: str
    callee: str
    args: tuple[tuple[str, str], ...] = ()
    ret: str | None = None
    test: str = ""
    seq: int = 0

    def to_json(self) -> str:
        return json.dumps({
            "event": self.event, "caller": self.caller, "callee": self.callee,
            "args": [{"name": n, "type": t} for n, t in self.args],
            "ret": self.ret, "test": self.test, "seq": self.seq,
        }, separators=(",", ":"))


_EVENT_FIELDS = {"event", "caller", "callee", "args", "ret", "test", "seq"}


def parse_trace(lines: Iterable[str]) -> list[TraceEvent]:
    """Parse one line-delimited trace file; the whole file is rejected on any error."""
    events: list[TraceEvent] = []
    last_seq = -1
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedTrace(lineno, f"invalid JSON: {exc.msg}") from None
        if not isinstance(obj, dict):
            raise MalformedTrace(lineno, "record must be an object")
        if set(obj) != _EVENT_FIELDS:
            extra = sorted(set(obj) - _EVENT_FIELDS)
            missing = sorted(_EVENT_FIELDS - set(obj))
            raise MalformedTrace(lineno, f"fields mismatch (unknown={extra}, missing={missing})")
        if obj["event"] not in EVENT_RELS:
            raise MalformedTrace(lineno, f"unknown event {obj['event']!r}")
        for k in ("caller", "callee", "test"):
            if not isinstance(obj[k], str) or (k != "test" and not obj[k]):
                raise MalformedTrace(lineno, f"{k} must be a non-empty string")
        if obj["ret"] is not None and not isinstance(obj["ret"], str):
            raise MalformedTrace(lineno, "ret must be a string or null")
        seq = obj["seq"]
        if not isinstance(seq, int) or isinstance(seq, bool) or seq < 0:
            raise MalformedTrace(lineno, "seq must be a nonnegative integer")
        if seq <= last_seq:
            raise MalformedTrace(lineno, "seq must be strictly increasing")
        last_seq = seq
        if not isinstance(obj["args"], list):
            raise MalformedTrace(lineno, "args must be a list")
        args = []
        for a in obj["args"]:
            if not isinstance(a, dict) or set(a) != {"name", "type"} or not all(isinstance(v, str) for v in a.values()):
                raise MalformedTrace(lineno, "args entries must be {name, type} strings")
            args.append((a["name"], a["type"]))
        events.append(TraceEvent(obj["event"], obj["caller"], obj["callee"], tuple(args),
                                 obj["ret"], obj["test"], seq))
    return events


def observed_types(events: Iterable[TraceEvent]) -> dict[str, dict[str, set[str]]]:
    out: dict[str, dict[str, set[str]]] = defaultdict(lambda: defaultdict(set))
    for ev in events:
        if ev.event != "call":
            continue
        for name, typ in ev.args:
            out[ev.callee][name].add(typ)
        if ev.ret is not None:
            out[ev.callee]["return"].add(ev.ret)
    return out


def ingest_traces(g: KnowledgeGraph, events: Iterable[TraceEvent]) -> KnowledgeGraph:
    """Build the dynamic overlay: observed edges with counts and observed types."""
    events = list(events)
    overlay = KnowledgeGraph()

    def node_for(name: str) -> int:
        nid = overlay.by_name.get(name)
        if nid is not None:
            return nid
        base = g.get(name)
        if base is None:
            return overlay.upsert_node(name, API, provenance=DYNAMIC)
        return overlay.upsert_node(name, base.kind, signature=base.signature, bases=base.bases,
                                   doc=base.doc, hash=base.hash, provenance=DYNAMIC)

    for ev in events:
        s = node_for(ev.caller)
        d = node_for(ev.callee)
        overlay.upsert_edge(s, EVENT_RELS[ev.event], d, DYNAMIC, count=1)
    for callee, obs in observed_types(events).items():
        node = overlay.node(callee)
        node.observed = {k: frozenset(v) for k, v in obs.items()}
    return overlay


def merge_signature(declared: Signature | None, observed: dict[str, frozenset[str]],
                    lattice: TypeLattice) -> tuple[Signature | None, frozenset[str]]:
    """Fold observed runtime types into a declared signature (most specific wins)."""
    if declared is None or not observed:
        return declared, frozenset()
    ambiguous = set()
    params = []
    for p in declared.params:
        obs = observed.get(p.name)
        if obs:
            t, amb = lattice.most_specific({p.type, *obs})
            if amb:
                ambiguous.add(p.name)
            params.append(ParamSig(p.name, t, p.has_default))
        else:
            params.append(p)
    ret = declared.returns
    obs = observed.get("return")
    if obs:
        ret, amb = lattice.most_specific({ret, *obs})
        if amb:
            ambiguous.add("return")
    return Signature(tuple(params), ret), frozenset(ambiguous)


def graph_lattice(g: KnowledgeGraph) -> TypeLattice:
    return TypeLattice({g.nodes[i].name: g.nodes[i].bases for i in g.nodes_of_kind(CLASS)})


def reconcile(g_static: KnowledgeGraph, overlay: KnowledgeGraph) -> KnowledgeGraph:
    """Merge a dynamic overlay into a static graph.

    Observed static candidates become confirmed; unobserved candidates stay
    candidates; dynamic-only edges are added; observed types refine declared
    signatures toward the most specific type.
    """
    g = g_static.copy()
    for on in overlay.nodes.values():
        node = g.get(on.name)
        if node is None:
            g.upsert_node(on.name, on.kind, provenance=DYNAMIC)
        elif node.provenance == STATIC:
            node.provenance = MERGED
    for oe in overlay.edges.values():
        s = g.by_name[overlay.nodes[oe.src].name]
        d = g.by_name[overlay.nodes[oe.dst].name]
        e = g.edge(s, oe.rel, d)
        if e is None:
            g.upsert_edge(s, oe.rel, d, DYNAMIC, count=oe.count)
        else:
            e.provenance = MERGED if e.provenance == STATIC else e.provenance
            e.count += oe.count
            if e.count > 0 and e.provenance == MERGED:
                e.candidate = False
                e.confirmed = True
    lattice = graph_lattice(g)
    for on in overlay.nodes.values():
        if not on.observed:
            continue
        node = g.node(on.name)
        merged_obs = {k: node.observed.get(k, frozenset()) | v for k, v in on.observed.items()}
        node.observed = merged_obs
        node.signature, node.ambiguous = merge_signature(node.signature, merged_obs, lattice)
    return g


def coverage_report(g: KnowledgeGraph, events: Iterable[TraceEvent]) -> tuple[frozenset[str], float]:
    funcs = {g.nodes[i].name for i in g.nodes_of_kind(FUNC)}
    executed = set()
    for ev in events:
        for name in (ev.caller, ev.callee):
            if name in funcs:
                executed.add(name)
    return frozenset(executed), (len(executed) / len(funcs) if funcs else 0.0)


@dataclass(frozen=True)
class CoverageReport:
    executed: frozenset[str]
    fraction: float


def coverage(g: KnowledgeGraph, events: Iterable[TraceEvent]) -> CoverageReport:
    executed, fraction = coverage_report(g, events)
    return CoverageReport(executed, fraction)


def live_events(events: Iterable[TraceEvent], table: SymbolTable) -> list[TraceEvent]:
    """Events whose endpoints exist in the snapshot, or whose callee is external."""
    out = []
    for ev in events:
        if table.entity(ev.caller, None) is None:
            continue
        if table.entity(ev.callee, None) is None and is_internal(ev.callee, table):
            continue
        out.append(ev)
    return out


def is_internal(name: str, table: SymbolTable) -> bool:
    parts = name.split(".")
    return any(".".join(parts[:i]) in table.modules for i in range(1, len(parts) + 1))
