"""Declared entities, canonical AST hashes and semantic diffing."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field, fields, is_dataclass

from .minipy import (
    BUILTIN_TYPES,
    Assign,
    ClassDef,
    FuncDef,
    Import,
    Module,
    Name,
    Span,
)

FUNC, CLASS, VAR, FILE, TEST, API = "FUNC", "CLASS", "VAR", "FILE", "TEST", "API"
KINDS = (FUNC, CLASS, VAR, FILE, TEST, API)

_WORD = re.compile(r"[a-z0-9_]+")


@dataclass(frozen=True)
class ParamSig:
    name: str
    type: str
    has_default: bool = False


@dataclass(frozen=True)
class Signature:
    params: tuple[ParamSig, ...]
    returns: str

    @property
    def required(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.params if not p.has_default)

    def type_terms(self) -> tuple[str, ...]:
        return tuple(p.type for p in self.params) + (self.returns,)


@dataclass(frozen=True)
class EntityDecl:
    qualified_name: str
    kind: str
    signature: Signature | None = None
    bases: tuple[str, ...] = ()
    doc_tokens: tuple[str, ...] = ()
    span: Span = field(default=Span(0, 0), compare=False)

    @property
    def terminal(self) -> str:
        return self.qualified_name.rsplit(".", 1)[-1]

    @property
    def private(self) -> bool:
        return self.terminal.startswith("_")


@dataclass(frozen=True)
class EntityDelta:
    added: frozenset[str] = frozenset()
    removed: frozenset[str] = frozenset()
    changed: frozenset[str] = frozenset()

    def __bool__(self) -> bool:
        return bool(self.added or self.removed or self.changed)


def doc_tokens(doc: str | None) -> tuple[str, ...]:
    if not doc:
        return ()
    return tuple(sorted(set(_WORD.findall(doc.lower()))))


def is_test_name(qualified_name: str, module: str) -> bool:
    return qualified_name.rsplit(".", 1)[-1].startswith("test_") or module.startswith("tests")


class ModuleScope:
    """Syntactic name bindings of one module (its own top-level names and imports)."""

    def __init__(self, ast: Module):
        self.module = ast.module
        self.top: dict[str, str] = {}       # local name -> kind of top-level item
        self.imported: dict[str, str] = {}  # local name -> qualified target (from X import n)
        self.modules: dict[str, str] = {}   # dotted prefix usable as receiver -> module (import a.b)
        for item in ast.items:
            if isinstance(item, Import):
                if item.names is None:
                    self.modules[item.module] = item.module
                else:
                    for n in item.names:
                        self.imported[n] = f"{item.module}.{n}"
            elif isinstance(item, FuncDef):
                self.top[item.name] = FUNC
            elif isinstance(item, ClassDef):
                self.top[item.name] = CLASS
            elif isinstance(item, Assign):
                assert isinstance(item.target, Name)
                self.top[item.target.id] = VAR

    def qualify(self, dotted: str) -> str:
        """Qualify a name as written in this module, without consulting other modules."""
        head, _, rest = dotted.partition(".")
        if head in self.top:
            return f"{self.module}.{dotted}"
        if head in self.imported:
            target = self.imported[head]
            return f"{target}.{rest}" if rest else target
        return dotted if rest else f"{self.module}.{dotted}"

    def qualify_type(self, written: str | None) -> str:
        if written is None:
            return "Any"
        if written in BUILTIN_TYPES:
            return written
        return self.qualify(written)


def _signature(fn: FuncDef, scope: ModuleScope, method: bool) -> Signature:
    params = fn.params[1:] if method and fn.params and fn.params[0].name == "self" else fn.params
    return Signature(
        tuple(ParamSig(p.name, scope.qualify_type(p.type), p.default is not None) for p in params),
        scope.qualify_type(fn.returns),
    )


def enumerate_entities(ast: Module) -> list[EntityDecl]:
    """All entities declared by one module, FILE node first, in source order."""
    mod = ast.module
    scope = ModuleScope(ast)
    out = [EntityDecl(mod, FILE, doc_tokens=())]

    def func_kind(qn: str) -> str:
        return TEST if is_test_name(qn, mod) else FUNC

    for item in ast.items:
        if isinstance(item, FuncDef):
            qn = f"{mod}.{item.name}"
            out.append(EntityDecl(qn, func_kind(qn), _signature(item, scope, False), (),
                                  doc_tokens(item.doc), item.span))
        elif isinstance(item, ClassDef):
            qn = f"{mod}.{item.name}"
            init = next((m for m in item.members if isinstance(m, FuncDef) and m.name == "__init__"), None)
            ctor = _signature(init, scope, True) if init is not None else Signature((), "Any")
            sig = Signature(ctor.params, qn)
            bases = tuple(scope.qualify(b) for b in item.bases)
            out.append(EntityDecl(qn, CLASS, sig, bases, doc_tokens(item.doc), item.span))
            for mem in item.members:
                if isinstance(mem, FuncDef):
                    mqn = f"{qn}.{mem.name}"
                    out.append(EntityDecl(mqn, func_kind(mqn), _signature(mem, scope, True), (),
                                          doc_tokens(mem.doc), mem.span))
        elif isinstance(item, Assign):
            assert isinstance(item.target, Name)
            out.append(EntityDecl(f"{mod}.{item.target.id}", VAR, span=item.span))
    return out


def entity_slices(ast: Module) -> dict[str, object]:
    """Map each entity's qualified name to the AST fragment its hash covers."""
    mod = ast.module
    out: dict[str, object] = {}
    # the FILE entity covers its imports; its items are entities of their own
    tops = []
    for item in ast.items:
        if isinstance(item, Import):
            tops.append(item)
        elif isinstance(item, FuncDef):
            out[f"{mod}.{item.name}"] = item
        elif isinstance(item, ClassDef):
            qn = f"{mod}.{item.name}"
            members = []
            for mem in item.members:
                if isinstance(mem, FuncDef):
                    out[f"{qn}.{mem.name}"] = mem
                    members.append(("def", mem.name))
                else:
                    members.append(mem)
            out[qn] = ("class", item.name, item.bases, item.doc, tuple(members))
        elif isinstance(item, Assign):
            assert isinstance(item.target, Name)
            out[f"{mod}.{item.target.id}"] = item
    out[mod] = ("module", mod, tuple(tops))
    return out


def _serialize(node: object, out: list[str]) -> None:
    if is_dataclass(node):
        out.append(type(node).__name__)
        out.append("(")
        for f in fields(node):
            if f.name == "span":
                continue
            _serialize(getattr(node, f.name), out)
            out.append(",")
        out.append(")")
    elif isinstance(node, (tuple, list)):
        out.append("[")
        for x in node:
            _serialize(x, out)
            out.append(",")
        out.append("]")
    elif isinstance(node, str):
        out.append(repr(node))
    elif node is None or isinstance(node, (bool, int, float)):
        out.append(f"{type(node).__name__}:{node!r}")
    else:
        raise TypeError(f"cannot serialize {type(node).__name__}")


def canonical_hash(entity: EntityDecl | str, ast_slice: object) -> int:
    """64-bit digest of an entity's AST fragment, blind to spans, comments and layout."""
    name = entity if isinstance(entity, str) else entity.qualified_name
    parts = [name, "|"]
    _serialize(ast_slice, parts)
    return int.from_bytes(hashlib.blake2b("".join(parts).encode(), digest_size=8).digest(), "big")


def entity_hashes(ast: Module) -> dict[str, int]:
    return {qn: canonical_hash(qn, sl) for qn, sl in entity_slices(ast).items()}


def semantic_diff(old: Module, new: Module) -> EntityDelta:
    """Entity-level delta between two versions of one module."""
    if old.module != new.module:
        raise ValueError(f"module mismatch: {old.module} vs {new.module}")
    return diff_hashes(entity_hashes(old), entity_hashes(new))


def diff_hashes(old: dict[str, int], new: dict[str, int]) -> EntityDelta:
    added = frozenset(new.keys() - old.keys())
    removed = frozenset(old.keys() - new.keys())
    changed = frozenset(n for n in old.keys() & new.keys() if old[n] != new[n])
    return EntityDelta(added, removed, changed)
