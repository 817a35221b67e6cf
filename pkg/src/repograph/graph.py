"""Knowledge graph data model: typed nodes, labeled edges, indices, persistence."""

from __future__ import annotations

import hashlib
from collections import defaultdict
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field, replace
from pathlib import Path

from .entities import API, CLASS, FILE, FUNC, KINDS, TEST, VAR, EntityDecl, ParamSig, Signature

CALLS, DEFINES, IMPORTS, MUTATES, RETURNS, INSTANCEOF = (
    "CALLS", "DEFINES", "IMPORTS", "MUTATES", "RETURNS", "INSTANCEOF")
RELS = (CALLS, DEFINES, IMPORTS, MUTATES, RETURNS, INSTANCEOF)

STATIC, DYNAMIC, MERGED = "static", "dynamic", "merged"
PROVENANCES = (STATIC, DYNAMIC, MERGED)

FORMAT_HEADER = "KGv1"

__all__ = [
    "API", "CLASS", "FILE", "FUNC", "TEST", "VAR", "KINDS", "RELS",
    "CALLS", "DEFINES", "IMPORTS", "MUTATES", "RETURNS", "INSTANCEOF",
    "STATIC", "DYNAMIC", "MERGED",
    "Node", "Edge", "KnowledgeGraph", "CanonicalForm", "UnknownNode", "FormatError",
    "GraphInvariantError", "canonicalize", "structural_hamming", "save", "load",
    "merge_provenance",
]


class UnknownNode(KeyError):
    pass


class GraphInvariantError(AssertionError):
    pass


class FormatError(ValueError):
    def __init__(self, offset: int, message: str):
        self.offset = offset
        super().__init__(f"byte {offset}: {message}")


def merge_provenance(a: str, b: str) -> str:
    return a if a == b else MERGED


@dataclass
class Node:
    id: int
    name: str
    kind: str
    signature: Signature | None = None
    bases: tuple[str, ...] = ()
    doc: tuple[str, ...] = ()
    hash: int = 0
    provenance: str = STATIC
    pending: bool = False
    # observed runtime types: parameter name (or "return") -> type names
    observed: dict[str, frozenset[str]] = field(default_factory=dict)
    # parameters whose observed types had no unique most specific type
    ambiguous: frozenset[str] = frozenset()

    @property
    def terminal(self) -> str:
        return self.name.rsplit(".", 1)[-1]

    @property
    def visibility(self) -> str:
        return "priv" if self.terminal.startswith("_") else "pub"

    @property
    def module(self) -> str:
        return self.name if self.kind == FILE else self.name.rsplit(".", 1)[0]

    def attr_digest(self) -> str:
        payload = "|".join([
            _format_sig(self.signature), ",".join(self.bases), self.visibility,
            ",".join(self.doc), f"{self.hash:016x}",
        ])
        return hashlib.blake2b(payload.encode(), digest_size=8).hexdigest()


@dataclass
class Edge:
    src: int
    rel: str
    dst: int
    provenance: str = STATIC
    confirmed: bool = False
    count: int = 0
    candidate: bool = False


@dataclass(frozen=True)
class CanonicalForm:
    nodes: tuple[tuple[str, str, str], ...]
    edges: tuple[tuple[str, str, str, bool, bool, int], ...]

    def node_keys(self) -> frozenset[tuple[str, str]]:
        return frozenset((n, k) for n, k, _ in self.nodes)

    def edge_keys(self) -> frozenset[tuple[str, str, str]]:
        return frozenset(e[:3] for e in self.edges)


class KnowledgeGraph:
    def __init__(self) -> None:
        self.nodes: dict[int, Node] = {}
        self.by_name: dict[str, int] = {}
        self.by_kind: dict[str, set[int]] = defaultdict(set)
        self.edges: dict[tuple[int, str, int], Edge] = {}
        self._out: dict[tuple[int, str], set[int]] = defaultdict(set)
        self._in: dict[tuple[int, str], set[int]] = defaultdict(set)
        self._next_id = 1

    def __len__(self) -> int:
        return len(self.nodes)

    # -- nodes ---------------------------------------------------------------
    def upsert_node(self, name: str, kind: str, **attrs) -> int:
        if kind not in KINDS:
            raise ValueError(f"unknown node kind {kind!r}")
        nid = self.by_name.get(name)
        if nid is None:
            nid = self._next_id
            self._next_id += 1
            self.nodes[nid] = Node(nid, name, kind, **attrs)
            self.by_name[name] = nid
            self.by_kind[kind].add(nid)
            return nid
        node = self.nodes[nid]
        if node.kind != kind:
            self.by_kind[node.kind].discard(nid)
            self.by_kind[kind].add(nid)
            node.kind = kind
        for k, v in attrs.items():
            setattr(node, k, v)
        return nid

    def upsert_decl(self, decl: EntityDecl, hash: int = 0, provenance: str = STATIC) -> int:
        return self.upsert_node(decl.qualified_name, decl.kind, signature=decl.signature,
                                bases=decl.bases, doc=decl.doc_tokens, hash=hash,
                                provenance=provenance)

    def remove_node(self, nid: int) -> None:
        node = self.nodes.get(nid)
        if node is None:
            raise UnknownNode(nid)
        for key in list(self.incident(nid)):
            self.remove_edge(*key)
        del self.nodes[nid]
        del self.by_name[node.name]
        self.by_kind[node.kind].discard(nid)

    def node(self, key: int | str) -> Node:
        nid = self.by_name.get(key) if isinstance(key, str) else key
        if nid is None or nid not in self.nodes:
            raise UnknownNode(key)
        return self.nodes[nid]

    def get(self, name: str) -> Node | None:
        nid = self.by_name.get(name)
        return None if nid is None else self.nodes[nid]

    def id_of(self, name: str) -> int:
        try:
            return self.by_name[name]
        except KeyError:
            raise UnknownNode(name) from None

    def nodes_of_kind(self, kind: str) -> set[int]:
        return self.by_kind.get(kind, set())

    # -- edges ---------------------------------------------------------------
    def _check(self, *ids: int) -> None:
        for i in ids:
            if i not in self.nodes:
                raise UnknownNode(i)

    def upsert_edge(self, src: int, rel: str, dst: int, provenance: str = STATIC, *,
                    count: int = 0, candidate: bool = False, confirmed: bool = False) -> Edge:
        self._check(src, dst)
        if rel not in RELS:
            raise ValueError(f"unknown relation {rel!r}")
        key = (src, rel, dst)
        e = self.edges.get(key)
        if e is None:
            e = Edge(src, rel, dst, provenance, confirmed, count, candidate)
            self.edges[key] = e
            self._out[(src, rel)].add(dst)
            self._in[(dst, rel)].add(src)
        else:
            e.provenance = merge_provenance(e.provenance, provenance)
            e.count += count
            e.candidate = e.candidate and candidate
            e.confirmed = e.confirmed or confirmed
        return e

    def put_edge(self, edge: Edge) -> None:
        """Insert or overwrite an edge with exactly the given attributes."""
        self._check(edge.src, edge.dst)
        key = (edge.src, edge.rel, edge.dst)
        if key not in self.edges:
            self._out[(edge.src, edge.rel)].add(edge.dst)
            self._in[(edge.dst, edge.rel)].add(edge.src)
        self.edges[key] = edge

    def remove_edge(self, src: int, rel: str, dst: int) -> None:
        key = (src, rel, dst)
        if key not in self.edges:
            return
        del self.edges[key]
        s = self._out.get((src, rel))
        if s is not None:
            s.discard(dst)
            if not s:
                del self._out[(src, rel)]
        s = self._in.get((dst, rel))
        if s is not None:
            s.discard(src)
            if not s:
                del self._in[(dst, rel)]

    def edge(self, src: int, rel: str, dst: int) -> Edge | None:
        return self.edges.get((src, rel, dst))

    def out(self, nid: int, rel: str | None = None) -> Iterator[int]:
        rels = RELS if rel is None else (rel,)
        for r in rels:
            yield from self._out.get((nid, r), ())

    def in_(self, nid: int, rel: str | None = None) -> Iterator[int]:
        rels = RELS if rel is None else (rel,)
        for r in rels:
            yield from self._in.get((nid, r), ())

    def out_edges(self, nid: int) -> Iterator[tuple[int, str, int]]:
        for r in RELS:
            for d in self._out.get((nid, r), ()):
                yield (nid, r, d)

    def in_edges(self, nid: int) -> Iterator[tuple[int, str, int]]:
        for r in RELS:
            for s in self._in.get((nid, r), ()):
                yield (s, r, nid)

    def incident(self, nid: int) -> set[tuple[int, str, int]]:
        return set(self.out_edges(nid)) | set(self.in_edges(nid))

    def edge_names(self, key: tuple[int, str, int]) -> tuple[str, str, str]:
        s, r, d = key
        return (self.nodes[s].name, r, self.nodes[d].name)

    # -- housekeeping --------------------------------------------------------
    def copy(self) -> KnowledgeGraph:
        g = KnowledgeGraph()
        for nid, n in self.nodes.items():
            g.nodes[nid] = replace(n, observed=dict(n.observed))
        g.by_name = dict(self.by_name)
        for k, ids in self.by_kind.items():
            g.by_kind[k] = set(ids)
        g.edges = {k: replace(e) for k, e in self.edges.items()}
        for k, v in self._out.items():
            g._out[k] = set(v)
        for k, v in self._in.items():
            g._in[k] = set(v)
        g._next_id = self._next_id
        return g

    def validate(self) -> None:
        """Rebuild every index from the node and edge sets and compare."""
        by_name = {n.name: nid for nid, n in self.nodes.items()}
        if len(by_name) != len(self.nodes):
            raise GraphInvariantError("duplicate node names")
        if by_name != self.by_name:
            raise GraphInvariantError("name index out of sync")
        by_kind: dict[str, set[int]] = defaultdict(set)
        for nid, n in self.nodes.items():
            if nid != n.id:
                raise GraphInvariantError(f"node id mismatch at {nid}")
            if nid >= self._next_id:
                raise GraphInvariantError("id counter behind live ids")
            by_kind[n.kind].add(nid)
        if {k: v for k, v in by_kind.items() if v} != {k: v for k, v in self.by_kind.items() if v}:
            raise GraphInvariantError("kind index out of sync")
        out: dict[tuple[int, str], set[int]] = defaultdict(set)
        inn: dict[tuple[int, str], set[int]] = defaultdict(set)
        for (s, r, d), e in self.edges.items():
            if (e.src, e.rel, e.dst) != (s, r, d):
                raise GraphInvariantError("edge key mismatch")
            if s not in self.nodes or d not in self.nodes:
                raise GraphInvariantError(f"dangling edge {(s, r, d)}")
            if e.count > 0 and e.provenance == STATIC:
                raise GraphInvariantError("observed edge with static provenance")
            out[(s, r)].add(d)
            inn[(d, r)].add(s)
        if dict(out) != {k: v for k, v in self._out.items() if v}:
            raise GraphInvariantError("forward adjacency out of sync")
        if dict(inn) != {k: v for k, v in self._in.items() if v}:
            raise GraphInvariantError("reverse adjacency out of sync")


# ---------------------------------------------------------------------------
# Canonical comparison
# ---------------------------------------------------------------------------

def canonicalize(g: KnowledgeGraph) -> CanonicalForm:
    nodes = tuple(sorted((n.name, n.kind, n.attr_digest()) for n in g.nodes.values()))
    names = {nid: n.name for nid, n in g.nodes.items()}
    edges = tuple(sorted(
        (names[e.src], e.rel, names[e.dst], e.confirmed, e.candidate, e.count)
        for e in g.edges.values()
    ))
    return CanonicalForm(nodes, edges)


def _keys(g: KnowledgeGraph | CanonicalForm) -> tuple[frozenset, frozenset]:
    if isinstance(g, KnowledgeGraph):
        names = {nid: n.name for nid, n in g.nodes.items()}
        return (frozenset((n.name, n.kind) for n in g.nodes.values()),
                frozenset((names[s], r, names[d]) for s, r, d in g.edges))
    return g.node_keys(), g.edge_keys()


def structural_hamming(g: KnowledgeGraph | CanonicalForm, g_star: KnowledgeGraph | CanonicalForm) -> int:
    """Size of the node plus edge symmetric difference under name-based keys."""
    v1, e1 = _keys(g)
    v2, e2 = _keys(g_star)
    return len(v1 ^ v2) + len(e1 ^ e2)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def _format_sig(sig: Signature | None) -> str:
    if sig is None:
        return "-"
    params = ",".join(f"{p.name}:{p.type}" + ("=" if p.has_default else "") for p in sig.params)
    return f"{params}->{sig.returns}"


def _parse_sig(text: str) -> Signature | None:
    if text == "-":
        return None
    params_txt, sep, ret = text.rpartition("->")
    if not sep or not ret:
        raise ValueError(f"bad signature {text!r}")
    params = []
    if params_txt:
        for chunk in params_txt.split(","):
            default = chunk.endswith("=")
            name, colon, typ = chunk.rstrip("=").partition(":")
            if not colon or not name or not typ:
                raise ValueError(f"bad parameter {chunk!r}")
            params.append(ParamSig(name, typ, default))
    return Signature(tuple(params), ret)


def _list_field(items: Iterable[str]) -> str:
    items = list(items)
    return ",".join(items) if items else "-"


def dumps(g: KnowledgeGraph) -> str:
    nlines = []
    for n in g.nodes.values():
        nlines.append(" ".join([
            "N", n.name, n.kind, n.visibility, f"{n.hash:016x}", n.provenance,
            "1" if n.pending else "0", "sig=" + _format_sig(n.signature),
            "doc=" + _list_field(n.doc), "bases=" + _list_field(n.bases),
        ]))
    elines = []
    for e in g.edges.values():
        elines.append(" ".join([
            "E", g.nodes[e.src].name, e.rel, g.nodes[e.dst].name, e.provenance,
            "1" if e.confirmed else "0", "1" if e.candidate else "0", str(e.count),
        ]))
    lines = [FORMAT_HEADER, *sorted(nlines), *sorted(elines), f"END {len(nlines) + len(elines)}"]
    return "\n".join(lines) + "\n"


def save(g: KnowledgeGraph, path: str | Path) -> None:
    Path(path).write_text(dumps(g), encoding="utf-8")


def _flag(tok: str) -> bool:
    if tok not in ("0", "1"):
        raise ValueError(f"bad flag {tok!r}")
    return tok == "1"


def loads(data: str | bytes) -> KnowledgeGraph:
    raw = data.encode() if isinstance(data, str) else data
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(exc.start, "invalid UTF-8") from None
    if not text.endswith("\n"):
        raise FormatError(len(raw), "truncated record (missing final newline)")
    g = KnowledgeGraph()
    offset = 0
    records = 0
    ended = False
    for lineno, line in enumerate(text.split("\n")[:-1]):
        here = offset
        offset += len(line.encode()) + 1
        if ended:
            raise FormatError(here, "data after END record")
        if lineno == 0:
            if line != FORMAT_HEADER:
                raise FormatError(here, f"expected header {FORMAT_HEADER!r}")
            continue
        parts = line.split(" ")
        try:
            if parts[0] == "N":
                if len(parts) != 10:
                    raise ValueError("node record needs 10 fields")
                _, name, kind, vis, hx, prov, pend, sig, doc, bases = parts
                if kind not in KINDS or prov not in PROVENANCES or vis not in ("pub", "priv"):
                    raise ValueError("bad node enum field")
                if not (sig.startswith("sig=") and doc.startswith("doc=") and bases.startswith("bases=")):
                    raise ValueError("bad node attribute field")
                if len(hx) != 16:
                    raise ValueError("hash must be 16 hex digits")
                if name in g.by_name:
                    raise ValueError(f"duplicate node {name}")
                d = doc[4:]
                b = bases[6:]
                nid = g.upsert_node(name, kind, signature=_parse_sig(sig[4:]),
                                    doc=() if d == "-" else tuple(d.split(",")),
                                    bases=() if b == "-" else tuple(b.split(",")),
                                    hash=int(hx, 16), provenance=prov, pending=_flag(pend))
                if g.nodes[nid].visibility != vis:
                    raise ValueError("visibility inconsistent with name")
            elif parts[0] == "E":
                if len(parts) != 8:
                    raise ValueError("edge record needs 8 fields")
                _, src, rel, dst, prov, conf, cand, count = parts
                if prov not in PROVENANCES or rel not in RELS:
                    raise ValueError("bad edge enum field")
                if src not in g.by_name or dst not in g.by_name:
                    raise ValueError("edge references unknown node")
                key = (g.by_name[src], rel, g.by_name[dst])
                if key in g.edges:
                    raise ValueError("duplicate edge")
                n = int(count)
                if n < 0:
                    raise ValueError("negative count")
                g.put_edge(Edge(key[0], rel, key[2], prov, _flag(conf), n, _flag(cand)))
            elif parts[0] == "END":
                if len(parts) != 2 or int(parts[1]) != records:
                    raise ValueError("record count mismatch")
                ended = True
                continue
            else:
                raise ValueError(f"unknown record type {parts[0]!r}")
        except ValueError as exc:
            raise FormatError(here, str(exc)) from None
        records += 1
    if not ended:
        raise FormatError(len(raw), "truncated file (missing END record)")
    return g


def load(path: str | Path) -> KnowledgeGraph:
    return loads(Path(path).read_bytes())
