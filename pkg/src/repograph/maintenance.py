"""Incremental maintenance of the knowledge graph.

A :class:`Workspace` owns the current snapshot and the graph derived from it.
Static edges are stored per source declaration together with the symbol
table lookups that produced them, so a change to the table re-resolves only
the sources that read a changed entry. In lazy mode those sources are
marked pending and resolved on first touch by a query.
"""

from __future__ import annotations

import hashlib
import time
from collections import defaultdict
from collections.abc import Iterable
from dataclasses import dataclass, field
from pathlib import Path

from .builder import (
    EVENT_RELS, FileFacts, Resolved, SymbolTable, TraceEvent,
    extract_file, extract_static_report, ingest_traces, is_internal, live_events,
    merge_signature, reconcile, resolve_source,
)
from .entities import API, CLASS, FILE, EntityDecl, diff_hashes
from .graph import (
    CALLS, DEFINES, DYNAMIC, IMPORTS, INSTANCEOF, MERGED, RETURNS, STATIC,
    Edge, KnowledgeGraph,
)
from .lattice import TypeLattice
from .minipy import ParseError, SourceFile

PROPAGATING_RELS = (CALLS, IMPORTS, RETURNS, INSTANCEOF)
SIGNATURE, BODY = "signature", "body"


class StaleSnapshot(Exception):
    def __init__(self, path: str):
        self.path = path
        super().__init__(f"stale snapshot: old text of {path} does not match the workspace")


def text_hash(text: str | None) -> str:
    return "-" if text is None else hashlib.sha256(text.encode()).hexdigest()


@dataclass(frozen=True)
class FileChange:
    path: str
    old: str | None
    new: str | None

    @property
    def kind(self) -> str:
        if self.old is None:
            return "added"
        if self.new is None:
            return "removed"
        return "modified"


@dataclass(frozen=True)
class ChangeSet:
    changes: tuple[FileChange, ...] = ()
    events: tuple[TraceEvent, ...] = ()

    def __post_init__(self) -> None:
        paths = [c.path for c in self.changes]
        if len(set(paths)) != len(paths):
            raise ValueError("duplicate path in change set")
        if not self.changes and not self.events:
            raise ValueError("empty change set")
        for c in self.changes:
            if c.old is None and c.new is None:
                raise ValueError(f"change to {c.path} has neither old nor new text")


@dataclass
class ImpactSets:
    direct: frozenset[str]
    transitive: frozenset[str]
    classification: dict[str, str]

    @property
    def signature_level(self) -> frozenset[str]:
        return frozenset(n for n, c in self.classification.items() if c == SIGNATURE)


@dataclass
class UpdateStats:
    nodes_visited: int = 0
    edges_touched: int = 0
    entities_reextracted: int = 0
    pending_created: int = 0
    pending_resolved: int = 0
    direct: int = 0
    transitive: int = 0
    parse_errors: dict[str, ParseError] = field(default_factory=dict)
    durations: dict[str, float] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Impact analysis
# ---------------------------------------------------------------------------

def _classify(old: EntityDecl | None, new: EntityDecl | None) -> str:
    if old is None or new is None or old.kind != new.kind:
        return SIGNATURE
    if old.kind == FILE:
        return SIGNATURE
    if old.signature != new.signature or old.bases != new.bases:
        return SIGNATURE
    return BODY


def _extract_changes(ws: Workspace, cs: ChangeSet) -> tuple[dict[str, FileFacts | None], dict[str, ParseError]]:
    """Facts each change leaves in effect (None when deleted) plus parse failures.

    A file that fails to parse keeps its previous facts when it had any.
    """
    parsed: dict[str, FileFacts | None] = {}
    errors: dict[str, ParseError] = {}
    for ch in cs.changes:
        if ch.new is None:
            parsed[ch.path] = None
            continue
        facts = extract_file(SourceFile(ch.path, ch.new))
        if facts.error is not None:
            errors[ch.path] = facts.error
            if ch.path in ws.facts:
                facts = ws.facts[ch.path]
        parsed[ch.path] = facts
    return parsed, errors


def check_fresh(ws: Workspace, cs: ChangeSet) -> None:
    for ch in cs.changes:
        if text_hash(ws.texts.get(ch.path)) != text_hash(ch.old):
            raise StaleSnapshot(ch.path)


def direct_impact(ws: Workspace, cs: ChangeSet,
                  parsed: dict[str, FileFacts | None] | None = None) -> ImpactSets:
    """Entities whose canonical AST changed, classified signature-level or body-only."""
    check_fresh(ws, cs)
    if parsed is None:
        parsed = _extract_changes(ws, cs)[0]
    classification: dict[str, str] = {}
    for ch in cs.changes:
        old = ws.facts.get(ch.path)
        new = parsed[ch.path]
        delta = diff_hashes(old.hashes if old else {}, new.hashes if new else {})
        old_decls = {d.qualified_name: d for d in old.decls} if old else {}
        new_decls = {d.qualified_name: d for d in new.decls} if new else {}
        for name in delta.added | delta.removed | delta.changed:
            classification[name] = _classify(old_decls.get(name), new_decls.get(name))
    direct = frozenset(classification)
    return ImpactSets(direct, direct, classification)


def transitive_impact(g: KnowledgeGraph, partial: ImpactSets, selective: bool = True) -> ImpactSets:
    """Close signature-level seeds under reverse CALLS/IMPORTS/RETURNS/INSTANCEOF."""
    seeds = partial.signature_level if selective else partial.direct
    seen = set(partial.direct)
    stack = [n for n in seeds if n in g.by_name]
    while stack:
        nid = g.by_name[stack.pop()]
        for rel in PROPAGATING_RELS:
            for src in g.in_(nid, rel):
                name = g.nodes[src].name
                if name not in seen:
                    seen.add(name)
                    stack.append(name)
    return ImpactSets(partial.direct, frozenset(seen), partial.classification)


# ---------------------------------------------------------------------------
# Workspace
# ---------------------------------------------------------------------------

Inst = tuple[str, str]            # (path, source qualified name)
EdgeKey = tuple[str, str, str]    # (src name, rel, dst name)


class Workspace:
    """Snapshot texts, trace log and the incrementally maintained graph."""

    def __init__(self) -> None:
        self.texts: dict[str, str] = {}
        self.effective: dict[str, str] = {}
        self.facts: dict[str, FileFacts] = {}
        self.errors: dict[str, ParseError] = {}
        self.table = SymbolTable()
        self.graph = KnowledgeGraph()
        self._decls: dict[str, dict[str, EntityDecl]] = {}
        # static side
        self._static: dict[Inst, dict[tuple[str, str], Resolved]] = {}
        self._deps: dict[Inst, set] = {}
        self._dependents: dict[tuple, set[Inst]] = defaultdict(set)
        self._contrib: dict[EdgeKey, dict[str, Resolved]] = {}
        self._api_static: dict[str, int] = defaultdict(int)
        # dynamic side
        self.events: list[TraceEvent] = []
        self._live: list[bool] = []
        self._events_by_name: dict[str, list[int]] = defaultdict(list)
        self._dyn: dict[EdgeKey, int] = defaultdict(int)
        self._endpoint: dict[str, int] = defaultdict(int)
        self._obs: dict[str, dict[str, dict[str, int]]] = {}
        self._keys_by_node: dict[str, set[EdgeKey]] = defaultdict(set)
        # lazy resolution
        self.pending: set[Inst] = set()
        self._pending_by_terminal: dict[str, set[Inst]] = defaultdict(set)
        self._pending_by_src: dict[str, set[Inst]] = defaultdict(set)
        self._lattice: TypeLattice | None = None
        # dirty sets for the next materialization
        self._dirty_nodes: set[str] = set()
        self._dirty_edges: set[EdgeKey] = set()

    # -- construction ----------------------------------------------------------
    @classmethod
    def build(cls, files: Iterable[SourceFile], events: Iterable[TraceEvent] = ()) -> Workspace:
        ws = cls()
        changes = tuple(FileChange(f.path, None, f.text) for f in sorted(files, key=lambda f: f.path))
        events = tuple(events)
        if changes or events:
            ws.apply(ChangeSet(changes, events), "eager")
        return ws

    def snapshot(self) -> list[SourceFile]:
        """The effective snapshot: last parseable text of each file."""
        return [SourceFile(p, self.effective[p]) for p in sorted(self.effective)]

    # -- static contributions --------------------------------------------------
    def _contrib_add(self, key: EdgeKey, path: str, r: Resolved) -> None:
        bucket = self._contrib.setdefault(key, {})
        if not bucket and not self._dyn.get(key):
            self._keys_by_node[key[0]].add(key)
            self._keys_by_node[key[2]].add(key)
        bucket[path] = r
        if r.api:
            self._api_static[key[2]] += 1
            self._dirty_nodes.add(key[2])
        self._dirty_edges.add(key)

    def _contrib_remove(self, key: EdgeKey, path: str) -> None:
        bucket = self._contrib.get(key)
        if bucket is None or path not in bucket:
            return
        r = bucket.pop(path)
        if r.api:
            self._api_static[key[2]] -= 1
            if not self._api_static[key[2]]:
                del self._api_static[key[2]]
            self._dirty_nodes.add(key[2])
        if not bucket:
            del self._contrib[key]
            if not self._dyn.get(key):
                self._forget_key(key)
        self._dirty_edges.add(key)

    def _forget_key(self, key: EdgeKey) -> None:
        for n in (key[0], key[2]):
            s = self._keys_by_node.get(n)
            if s is not None:
                s.discard(key)
                if not s:
                    del self._keys_by_node[n]

    def _drop_inst(self, inst: Inst) -> None:
        path, src = inst
        for (rel, dst) in self._static.pop(inst, {}):
            self._contrib_remove((src, rel, dst), path)
        for key in self._deps.pop(inst, ()):
            deps = self._dependents.get(key)
            if deps is not None:
                deps.discard(inst)
                if not deps:
                    del self._dependents[key]
        self._unpend(inst)

    def _resolve_inst(self, inst: Inst) -> int:
        """Recompute one source's static out-edges; returns the number of edges touched."""
        path, src = inst
        facts = self.facts[path]
        old = self._static.pop(inst, {})
        for key in self._deps.pop(inst, ()):
            deps = self._dependents.get(key)
            if deps is not None:
                deps.discard(inst)
                if not deps:
                    del self._dependents[key]
        self._unpend(inst)
        deps: set = set()
        new = resolve_source(facts.refs.get(src, ()), self.table, deps)
        for s, d in facts.defines:
            if s == src:
                new[(DEFINES, d)] = Resolved(DEFINES, d)
        for k in old.keys() - new.keys():
            self._contrib_remove((src, *k), path)
        for k, r in new.items():
            if old.get(k) != r:
                if k in old:
                    self._contrib_remove((src, *k), path)
                self._contrib_add((src, *k), path, r)
        self._static[inst] = new
        self._deps[inst] = deps
        for key in deps:
            self._dependents[key].add(inst)
        return len(old.keys() | new.keys())

    # -- pending bookkeeping ---------------------------------------------------
    def _terminals(self, inst: Inst) -> set[str]:
        path, src = inst
        return {r.terminal for r in self.facts[path].refs.get(src, ())}

    def _pend(self, inst: Inst) -> bool:
        if inst in self.pending:
            return False
        self.pending.add(inst)
        for t in self._terminals(inst):
            self._pending_by_terminal[t].add(inst)
        self._pending_by_src[inst[1]].add(inst)
        self._dirty_nodes.add(inst[1])
        return True

    def _unpend(self, inst: Inst) -> None:
        if inst not in self.pending:
            return
        self.pending.discard(inst)
        for t in self._terminals(inst):
            s = self._pending_by_terminal.get(t)
            if s is not None:
                s.discard(inst)
                if not s:
                    del self._pending_by_terminal[t]
        s = self._pending_by_src.get(inst[1])
        if s is not None:
            s.discard(inst)
            if not s:
                del self._pending_by_src[inst[1]]
        self._dirty_nodes.add(inst[1])

    # -- dynamic side ----------------------------------------------------------
    def _event_live(self, ev: TraceEvent) -> bool:
        if ev.caller not in self.table.ents:
            return False
        return ev.callee in self.table.ents or not is_internal(ev.callee, self.table)

    def _set_live(self, i: int, live: bool) -> None:
        if self._live[i] == live:
            return
        self._live[i] = live
        ev = self.events[i]
        delta = 1 if live else -1
        key = (ev.caller, EVENT_RELS[ev.event], ev.callee)
        if live and not self._dyn.get(key) and key not in self._contrib:
            self._keys_by_node[key[0]].add(key)
            self._keys_by_node[key[2]].add(key)
        self._dyn[key] += delta
        if not self._dyn[key]:
            del self._dyn[key]
            if key not in self._contrib:
                self._forget_key(key)
        self._dirty_edges.add(key)
        for n in (ev.caller, ev.callee):
            self._endpoint[n] += delta
            if not self._endpoint[n]:
                del self._endpoint[n]
            self._dirty_nodes.add(n)
        if ev.event == "call":
            obs = self._obs.setdefault(ev.callee, {})
            pairs = list(ev.args) + ([("return", ev.ret)] if ev.ret is not None else [])
            for name, typ in pairs:
                bucket = obs.setdefault(name, {})
                bucket[typ] = bucket.get(typ, 0) + delta
                if not bucket[typ]:
                    del bucket[typ]
                if not bucket:
                    del obs[name]
            if not obs:
                del self._obs[ev.callee]

    def _add_event(self, ev: TraceEvent) -> None:
        i = len(self.events)
        self.events.append(ev)
        self._live.append(False)
        self._events_by_name[ev.caller].append(i)
        if ev.callee != ev.caller:
            self._events_by_name[ev.callee].append(i)
        self._set_live(i, self._event_live(ev))

    def observed(self, name: str) -> dict[str, frozenset[str]]:
        return {k: frozenset(v) for k, v in self._obs.get(name, {}).items()}

    # -- materialization -------------------------------------------------------
    def _decl(self, name: str) -> tuple[EntityDecl, str] | None:
        owners = self._decls.get(name)
        if not owners:
            return None
        path = min(owners)
        return owners[path], path

    def _lattice_now(self) -> TypeLattice:
        if self._lattice is None:
            self._lattice = self.table.lattice()
        return self._lattice

    def _materialize_node(self, name: str) -> None:
        g = self.graph
        got = self._decl(name)
        endpoint = self._endpoint.get(name, 0) > 0
        if got is not None:
            decl, path = got
            observed = self.observed(name)
            sig, amb = merge_signature(decl.signature, observed, self._lattice_now())
            g.upsert_node(name, decl.kind, signature=sig, bases=decl.bases, doc=decl.doc_tokens,
                          hash=self.facts[path].hashes.get(name, 0),
                          provenance=MERGED if endpoint else STATIC,
                          pending=name in self._pending_by_src, observed=observed, ambiguous=amb)
            return
        static_api = self._api_static.get(name, 0) > 0
        if static_api or endpoint:
            prov = MERGED if static_api and endpoint else STATIC if static_api else DYNAMIC
            g.upsert_node(name, API, signature=None, bases=(), doc=(), hash=0, provenance=prov,
                          pending=False, observed=self.observed(name), ambiguous=frozenset())
            return
        nid = g.by_name.get(name)
        if nid is not None:
            g.remove_node(nid)

    def _materialize_edge(self, key: EdgeKey) -> None:
        g = self.graph
        src, rel, dst = key
        s = g.by_name.get(src)
        d = g.by_name.get(dst)
        if s is None or d is None:
            return
        declared = dst in self.table.ents
        valid = [r for r in self._contrib.get(key, {}).values() if declared or r.api]
        n = self._dyn.get(key, 0)
        if not valid and not n:
            g.remove_edge(s, rel, d)
            return
        static = bool(valid)
        cand = static and all(r.candidate for r in valid) and n == 0
        prov = (MERGED if n else STATIC) if static else DYNAMIC
        g.put_edge(Edge(s, rel, d, prov, static and n > 0, n, cand))

    def _flush(self) -> tuple[int, int]:
        nodes, edges = self._dirty_nodes, self._dirty_edges
        self._dirty_nodes, self._dirty_edges = set(), set()
        for name in sorted(nodes):
            existed = name in self.graph.by_name
            self._materialize_node(name)
            if existed != (name in self.graph.by_name):
                edges |= self._keys_by_node.get(name, set())
        for key in sorted(edges):
            self._materialize_edge(key)
        return len(nodes), len(edges)

    # -- lazy resolution -------------------------------------------------------
    def touch(self, name: str) -> int:
        """Resolve every pending source that could add or remove an edge at ``name``."""
        if not self.pending:
            return 0
        todo = set(self._pending_by_src.get(name, ()))
        todo |= self._pending_by_terminal.get(name.rsplit(".", 1)[-1], set())
        for inst in sorted(todo):
            self._resolve_inst(inst)
        if todo:
            self._flush()
        return len(todo)

    def resolve_pending(self, scope: Iterable[str]) -> int:
        return sum(self.touch(n) for n in list(scope))

    def resolve_all(self) -> int:
        todo = sorted(self.pending)
        for inst in todo:
            self._resolve_inst(inst)
        self._flush()
        return len(todo)

    # -- updates ---------------------------------------------------------------
    def apply(self, cs: ChangeSet, mode: str = "lazy", selective: bool = True) -> UpdateStats:
        if mode not in ("lazy", "eager"):
            raise ValueError(f"unknown mode {mode!r}")
        stats = UpdateStats()
        visited: set[str] = set()
        t0 = time.perf_counter()

        # phase 1: verify, diff and invalidate
        check_fresh(self, cs)
        parsed, stats.parse_errors = _extract_changes(self, cs)
        impact = transitive_impact(self.graph, direct_impact(self, cs, parsed), selective)
        stats.direct, stats.transitive = len(impact.direct), len(impact.transitive)
        visited |= impact.transitive
        changed = [ch for ch in cs.changes
                   if parsed[ch.path] is not self.facts.get(ch.path)
                   and (parsed[ch.path] is None or ch.path not in self.facts
                        or parsed[ch.path].hashes != self.facts[ch.path].hashes)]
        keys: set = set()
        for ch in changed:
            for f in (self.facts.get(ch.path), parsed[ch.path]):
                if f is None:
                    continue
                keys |= {("ent", n) for n in f.names}
                keys |= {("meth", m) for _, m in f.methods}
                parts = f.module.split(".")
                keys |= {("ns", ".".join(parts[:i])) for i in range(1, len(parts) + 1)}
        before = {k: self.table.key_value(k) for k in keys}
        for ch in changed:
            old = self.facts.get(ch.path)
            if old is not None:
                for src in old.refs:
                    self._drop_inst((ch.path, src))
                self.table.remove_file(old)
                for d in old.decls:
                    owners = self._decls[d.qualified_name]
                    owners.pop(ch.path, None)
                    if not owners:
                        del self._decls[d.qualified_name]
                    self._dirty_nodes.add(d.qualified_name)
                del self.facts[ch.path]
        t1 = time.perf_counter()

        # phase 2: focused re-extraction of changed files
        for ch in changed:
            new = parsed[ch.path]
            if new is None:
                continue
            self.facts[ch.path] = new
            self.table.add_file(new)
            for d in new.decls:
                self._decls.setdefault(d.qualified_name, {})[ch.path] = d
                self._dirty_nodes.add(d.qualified_name)
            stats.entities_reextracted += len(new.decls)
        for ch in cs.changes:
            if ch.new is None:
                self.texts.pop(ch.path, None)
                self.effective.pop(ch.path, None)
                self.errors.pop(ch.path, None)
            else:
                self.texts[ch.path] = ch.new
                if ch.path in stats.parse_errors:
                    self.errors[ch.path] = stats.parse_errors[ch.path]
                    if parsed[ch.path].error is not None:
                        self.effective[ch.path] = ch.new
                else:
                    self.errors.pop(ch.path, None)
                    self.effective[ch.path] = ch.new
        t2 = time.perf_counter()

        # phase 3: reconciliation
        changed_keys = {k for k in keys if self.table.key_value(k) != before[k]}
        if any(k[0] == "ent" and CLASS in (_kind(before[k]), _kind(self.table.key_value(k)))
               for k in changed_keys):
            self._lattice = None
            self._dirty_nodes.update(self._obs)
        eager_now: set[Inst] = set()
        for ch in changed:
            new = parsed[ch.path]
            if new is not None:
                eager_now |= {(ch.path, src) for src in new.refs}
        lazy_now: set[Inst] = set()
        for k in changed_keys:
            deps = self._dependents.get(k, set())
            if k[0] == "ns" or mode == "eager":
                eager_now |= deps
            else:
                lazy_now |= deps
        for inst in sorted(eager_now):
            stats.edges_touched += self._resolve_inst(inst)
            visited.add(inst[1])
        for inst in sorted(lazy_now - eager_now):
            if self._pend(inst):
                stats.pending_created += 1
            visited.add(inst[1])
        # dynamic facts: re-check liveness of events naming changed entities
        if any(k[0] == "ns" for k in changed_keys):
            recheck = range(len(self.events))
        else:
            idx: set[int] = set()
            for k in changed_keys:
                if k[0] == "ent":
                    idx.update(self._events_by_name.get(k[1], ()))
            recheck = sorted(idx)
        for i in recheck:
            self._set_live(i, self._event_live(self.events[i]))
        for ev in cs.events:
            self._add_event(ev)
        for name in self._dirty_nodes:
            visited.add(name)
        n_nodes, n_edges = self._flush()
        stats.edges_touched += n_edges
        stats.nodes_visited = len(visited)
        t3 = time.perf_counter()
        stats.durations = {"invalidate": t1 - t0, "reextract": t2 - t1, "reconcile": t3 - t2}
        return stats


def _kind(v) -> str | None:
    return v[0] if isinstance(v, tuple) else None


# ---------------------------------------------------------------------------
# Module-level operations
# ---------------------------------------------------------------------------

def apply_update(ws: Workspace, cs: ChangeSet, mode: str = "lazy") -> tuple[KnowledgeGraph, UpdateStats]:
    stats = ws.apply(cs, mode)
    return ws.graph, stats


def resolve_pending(ws: Workspace, scope: Iterable[str]) -> KnowledgeGraph:
    ws.resolve_pending(scope)
    return ws.graph


def resolve_all(ws: Workspace) -> KnowledgeGraph:
    ws.resolve_all()
    return ws.graph


def full_rebuild(files: Iterable[SourceFile], events: Iterable[TraceEvent] = ()) -> KnowledgeGraph:
    """From-scratch extraction, trace re-ingestion and reconciliation."""
    g, report = extract_static_report(files)
    table = SymbolTable.build(report.facts.values())
    overlay = ingest_traces(g, live_events(events, table))
    return reconcile(g, overlay)


# ---------------------------------------------------------------------------
# Commit replay directories
# ---------------------------------------------------------------------------

def write_changeset(directory: str | Path, cs: ChangeSet) -> None:
    """Write a manifest plus payload files (``new/<path>`` and ``old/<path>``)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    lines = []
    for ch in cs.changes:
        lines.append(f"CHANGE {ch.path} {text_hash(ch.old)} {text_hash(ch.new)}")
        for side, text in (("old", ch.old), ("new", ch.new)):
            if text is not None:
                p = d / side / ch.path
                p.parent.mkdir(parents=True, exist_ok=True)
                p.write_text(text, encoding="utf-8")
    (d / "MANIFEST").write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    if cs.events:
        (d / "traces.jsonl").write_text("".join(e.to_json() + "\n" for e in cs.events), encoding="utf-8")


def read_changeset(directory: str | Path, ws: Workspace | None = None) -> ChangeSet:
    """Read a changeset; old texts come from ``old/`` or, when absent, the workspace."""
    from .builder import parse_trace

    d = Path(directory)
    changes = []
    for lineno, line in enumerate((d / "MANIFEST").read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4 or parts[0] != "CHANGE":
            raise ValueError(f"{d / 'MANIFEST'}:{lineno}: expected CHANGE <path> <old> <new>")
        _, path, old_h, new_h = parts
        old = _payload(d / "old" / path)
        if old is None and old_h != "-" and ws is not None:
            old = ws.texts.get(path)
        if old_h != "-":
            if old is None or text_hash(old) != old_h:
                raise StaleSnapshot(path)
        else:
            old = None
        new = _payload(d / "new" / path) if new_h != "-" else None
        if new_h != "-" and (new is None or text_hash(new) != new_h):
            raise ValueError(f"{d}: payload for {path} does not match its hash")
        changes.append(FileChange(path, old, new))
    events: tuple[TraceEvent, ...] = ()
    tp = d / "traces.jsonl"
    if tp.exists():
        events = tuple(parse_trace(tp.read_text(encoding="utf-8").splitlines()))
    return ChangeSet(tuple(changes), events)


def _payload(p: Path) -> str | None:
    return p.read_text(encoding="utf-8") if p.exists() else None
