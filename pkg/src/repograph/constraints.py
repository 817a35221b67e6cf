"""Decoding constraints and an incremental decision procedure for them.

Four constraint classes are supported: subtyping between type terms, call
arity and required arguments, visibility of private names, and forbidden
architectural relations. The store decides them with union-find over type
variables plus direct checks, and supports LIFO push/pop with an undo trail.

Type variables joined by ``TypeSub`` are unified (treated as equal). A
variable class is satisfiable while some concrete type lies between all of
its lower and upper bounds.
"""

from __future__ import annotations

import fnmatch
from collections.abc import Iterable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

from .entities import Signature
from .graph import CLASS, FUNC, TEST, KnowledgeGraph
from .lattice import ANY, TypeLattice
from .minipy import BUILTIN_TYPES


@dataclass(frozen=True, order=True)
class TVar:
    id: int

    def __str__(self) -> str:
        return f"?{self.id}"


TypeTerm = Union[TVar, str]


@dataclass(frozen=True)
class TypeSub:
    sub: TypeTerm
    sup: TypeTerm


@dataclass(frozen=True)
class ArityEq:
    callee: str
    n: int
    kwnames: frozenset[str] = frozenset()


@dataclass(frozen=True)
class RequiredArg:
    """``param`` of ``callee`` must be bound by a call with ``n`` positionals and ``kwnames``."""

    callee: str
    param: str
    n: int = 0
    kwnames: frozenset[str] = frozenset()


@dataclass(frozen=True)
class Visible:
    name: str
    scope: str


@dataclass(frozen=True)
class ArchForbid:
    """A forbidden-relation rule instantiated on one emitted relation ``src -rel-> dst``."""

    src_glob: str
    rel: str
    dst_glob: str
    src: str
    dst: str


Constraint = Union[TypeSub, ArityEq, RequiredArg, Visible, ArchForbid]


class StackMismatch(RuntimeError):
    pass


class RuleSyntaxError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Context shared by all stores of one decoding problem
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ArchRule:
    src_glob: str
    rel: str
    dst_glob: str

    def instance(self, src: str, dst: str) -> ArchForbid:
        return ArchForbid(self.src_glob, self.rel, self.dst_glob, src, dst)


def parse_rules(text: str) -> list[ArchRule]:
    """Parse ``FORBID <src-glob> <REL> <dst-glob>`` lines; blanks and ``#`` comments skipped."""
    rules = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4 or parts[0] != "FORBID":
            raise RuleSyntaxError(f"line {lineno}: expected 'FORBID <src> <REL> <dst>'")
        rules.append(ArchRule(parts[1], parts[2], parts[3]))
    return rules


def load_rules(path: str | Path) -> list[ArchRule]:
    return parse_rules(Path(path).read_text())


@dataclass
class SolverContext:
    """Callee signatures and the type lattice constraints are decided against."""

    signatures: dict[str, Signature] = field(default_factory=dict)
    lattice: TypeLattice = field(default_factory=TypeLattice)
    rules: list[ArchRule] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.universe = tuple(sorted(set(BUILTIN_TYPES) | self.lattice.classes | {ANY}))

    @classmethod
    def from_graph(cls, g: KnowledgeGraph, rules: Iterable[ArchRule] = ()) -> SolverContext:
        sigs = {n.name: n.signature for n in g.nodes.values()
                if n.kind in (FUNC, CLASS, TEST) and n.signature is not None}
        bases = {n.name: n.bases for n in g.nodes.values() if n.kind == CLASS}
        return cls(sigs, TypeLattice(bases), list(rules))


def arity_ok(sig: Signature, n: int, kwnames: frozenset[str]) -> bool:
    names = [p.name for p in sig.params]
    if n > len(names):
        return False
    if not kwnames <= set(names[n:]):
        return False
    return set(sig.required) <= set(names[:n]) | kwnames


def bound(sig: Signature, param: str, n: int, kwnames: frozenset[str]) -> bool:
    names = [p.name for p in sig.params]
    if param not in names:
        return True
    return names.index(param) < n or param in kwnames


def visible(name: str, scope: str) -> bool:
    """Underscore rule: a private component is visible only inside its owner."""
    parts = name.split(".")
    for i, part in enumerate(parts):
        if part.startswith("_") and not (part.startswith("__") and part.endswith("__")):
            owner = ".".join(parts[:i])
            return bool(owner) and (scope == owner or scope.startswith(owner + "."))
    return True


def holds_ground(c: Constraint, ctx: SolverContext) -> bool:
    """Truth of a constraint that mentions no type variable."""
    if isinstance(c, TypeSub):
        assert not isinstance(c.sub, TVar) and not isinstance(c.sup, TVar)
        return ctx.lattice.leq(c.sub, c.sup)
    if isinstance(c, ArityEq):
        sig = ctx.signatures.get(c.callee)
        return sig is None or arity_ok(sig, c.n, c.kwnames)
    if isinstance(c, RequiredArg):
        sig = ctx.signatures.get(c.callee)
        return sig is None or bound(sig, c.param, c.n, c.kwnames)
    if isinstance(c, Visible):
        return visible(c.name, c.scope)
    if isinstance(c, ArchForbid):
        return not (fnmatch.fnmatchcase(c.src, c.src_glob) and fnmatch.fnmatchcase(c.dst, c.dst_glob))
    raise TypeError(f"not a constraint: {c!r}")


# ---------------------------------------------------------------------------
# Store
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Status:
    ok: bool
    violated: Constraint | None = None
    # some constraints were deferred by the work budget and are not yet decided
    pending: bool = False

    def __str__(self) -> str:
        if not self.ok:
            return f"UNSAT({self.violated})"
        return "SAT?" if self.pending else "SAT"


SAT = Status(True)

_MISSING = object()


@dataclass(frozen=True, eq=False)
class Frame:
    depth: int
    trail_mark: int
    live_mark: int


@dataclass(frozen=True)
class FrozenState:
    parent: tuple
    size: tuple
    lower: tuple
    upper: tuple
    meta: tuple
    live: tuple


class ConstraintStore:
    """Incremental constraint set with LIFO frames and sticky UNSAT."""

    def __init__(self, ctx: SolverContext, *, budget: int | None = None):
        self.ctx = ctx
        self.budget = budget
        self._parent: dict[TVar, TVar] = {}
        self._size: dict[TVar, int] = {}
        self._lower: dict[TVar, frozenset[str]] = {}
        self._upper: dict[TVar, frozenset[str]] = {}
        self._meta: dict[str, object] = {"violated": None, "deferred": ()}
        self._trail: list[tuple[dict, object, object]] = []
        self._frames: list[Frame] = []
        self.live: list[Constraint] = []
        # total work units spent (set intersections and lattice probes)
        self.work = 0

    # -- state ------------------------------------------------------------

    def _set(self, d: dict, k: object, v: object) -> None:
        self._trail.append((d, k, d.get(k, _MISSING)))
        d[k] = v

    def find(self, v: TVar) -> TVar:
        while True:
            p = self._parent.get(v)
            if p is None or p == v:
                return v
            self.work += 1
            v = p

    def _feasible(self, root: TVar) -> bool:
        upper = self._upper.get(root, frozenset())
        if not upper:
            return True
        lower = self._lower.get(root, frozenset())
        leq = self.ctx.lattice.leq
        for t in sorted(set(self.ctx.universe) | lower | upper):
            self.work += 1
            if all(leq(l, t) for l in lower) and all(leq(t, u) for u in upper):
                return True
        return False

    def _add(self, c: Constraint) -> bool:
        if not isinstance(c, TypeSub):
            self.work += 1
            return holds_ground(c, self.ctx)
        a = self.find(c.sub) if isinstance(c.sub, TVar) else c.sub
        b = self.find(c.sup) if isinstance(c.sup, TVar) else c.sup
        if not isinstance(a, TVar) and not isinstance(b, TVar):
            self.work += 1
            return self.ctx.lattice.leq(a, b)
        if isinstance(a, TVar) and isinstance(b, TVar):
            if a == b:
                return True
            if self._size.get(a, 1) < self._size.get(b, 1):
                a, b = b, a
            self._set(self._parent, b, a)
            self._set(self._size, a, self._size.get(a, 1) + self._size.get(b, 1))
            self._set(self._lower, a, self._lower.get(a, frozenset()) | self._lower.get(b, frozenset()))
            self._set(self._upper, a, self._upper.get(a, frozenset()) | self._upper.get(b, frozenset()))
            return self._feasible(a)
        if isinstance(a, TVar):
            self._set(self._upper, a, self._upper.get(a, frozenset()) | {b})
            return self._feasible(a)
        self._set(self._lower, b, self._lower.get(b, frozenset()) | {a})
        return self._feasible(b)

    def _absorb(self, constraints: Iterable[Constraint], budget: int | None) -> None:
        start = self.work
        todo = list(constraints)
        for i, c in enumerate(todo):
            if budget is not None and self.work - start > budget:
                self._set(self._meta, "deferred", self._meta["deferred"] + tuple(todo[i:]))
                return
            self.live.append(c)
            if self._meta["violated"] is None and not self._add(c):
                self._set(self._meta, "violated", c)

    # -- public interface --------------------------------------------------

    def push(self, constraints: Iterable[Constraint] = ()) -> Frame:
        frame = Frame(len(self._frames), len(self._trail), len(self.live))
        self._frames.append(frame)
        self._absorb(constraints, self.budget)
        return frame

    def pop(self, frame: Frame) -> None:
        if not self._frames or self._frames[-1] is not frame:
            raise StackMismatch(f"frame {frame.depth} is not the top of the stack")
        self._frames.pop()
        while len(self._trail) > frame.trail_mark:
            d, k, old = self._trail.pop()
            if old is _MISSING:
                del d[k]
            else:
                d[k] = old
        del self.live[frame.live_mark:]

    @property
    def depth(self) -> int:
        return len(self._frames)

    def check(self) -> Status:
        v = self._meta["violated"]
        if v is not None:
            return Status(False, v)  # type: ignore[arg-type]
        return Status(True, pending=bool(self._meta["deferred"]))

    def finalize(self) -> Status:
        """Decide deferred constraints too, without budget, on a copy."""
        if not self._meta["deferred"] or self._meta["violated"] is not None:
            return Status(self.check().ok, self.check().violated)
        other = self.copy()
        deferred = other._meta["deferred"]
        other._meta["deferred"] = ()
        other._absorb(deferred, None)  # type: ignore[arg-type]
        return other.check()

    def batch_check(self, deltas: Iterable[Iterable[Constraint]]) -> list[Status]:
        out = []
        for delta in deltas:
            frame = self.push(delta)
            out.append(self.check())
            self.pop(frame)
        return out

    def freeze(self) -> FrozenState:
        return FrozenState(
            tuple(self._parent.items()), tuple(self._size.items()),
            tuple(self._lower.items()), tuple(self._upper.items()),
            tuple(self._meta.items()), tuple(self.live),
        )

    @classmethod
    def thaw(cls, state: FrozenState, ctx: SolverContext, *, budget: int | None = None) -> ConstraintStore:
        s = cls(ctx, budget=budget)
        s._parent = dict(state.parent)
        s._size = dict(state.size)
        s._lower = dict(state.lower)
        s._upper = dict(state.upper)
        s._meta = dict(state.meta)
        s.live = list(state.live)
        return s

    def copy(self) -> ConstraintStore:
        """Independent store with the same decided state and an empty frame stack."""
        return ConstraintStore.thaw(self.freeze(), self.ctx, budget=self.budget)


def solve(constraints: Iterable[Constraint], ctx: SolverContext) -> Status:
    """From-scratch decision of a constraint list."""
    s = ConstraintStore(ctx)
    s.push(constraints)
    return s.check()


def violations(constraints: Iterable[Constraint], ctx: SolverContext) -> list[Constraint]:
    """Constraints that each conflict with the consistent part of the list before them."""
    s = ConstraintStore(ctx)
    bad = []
    for c in constraints:
        frame = s.push([c])
        if not s.check().ok:
            s.pop(frame)
            bad.append(c)
    return bad


# ---------------------------------------------------------------------------
# Prefix cache
# ---------------------------------------------------------------------------

class _TrieNode:
    __slots__ = ("children", "state")

    def __init__(self) -> None:
        self.children: dict[object, _TrieNode] = {}
        self.state: FrozenState | None = None


class PrefixCache:
    """Trie from token prefixes to frozen solver states."""

    def __init__(self) -> None:
        self.root = _TrieNode()
        self.hits = 0
        self.misses = 0

    def get(self, prefix: Iterable[object]) -> FrozenState | None:
        node = self.root
        for tok in prefix:
            node = node.children.get(tok)  # type: ignore[assignment]
            if node is None:
                self.misses += 1
                return None
        if node.state is None:
            self.misses += 1
        else:
            self.hits += 1
        return node.state

    def put(self, prefix: Iterable[object], state: FrozenState) -> None:
        node = self.root
        for tok in prefix:
            node = node.children.setdefault(tok, _TrieNode())
        node.state = state


# ---------------------------------------------------------------------------
# Extraction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CallFact:
    """A completed call: callee name, positional argument terms, keyword argument terms."""

    callee: str
    args: tuple[TypeTerm, ...] = ()
    kwargs: tuple[tuple[str, TypeTerm], ...] = ()


@dataclass(frozen=True)
class PrefixSummary:
    """Syntactic facts of an emitted prefix that constraints are extracted from."""

    scope: str
    calls: tuple[CallFact, ...] = ()
    names: tuple[str, ...] = ()
    relations: tuple[tuple[str, str, str], ...] = ()
    returns: tuple[TypeTerm, ...] = ()


def call_constraints(call: CallFact, ctx: SolverContext) -> list[Constraint]:
    sig = ctx.signatures.get(call.callee)
    if sig is None:
        # unknown callees behave as external APIs with an Any signature
        return []
    kw = frozenset(k for k, _ in call.kwargs)
    n = len(call.args)
    out: list[Constraint] = [ArityEq(call.callee, n, kw)]
    for p, t in zip(sig.params, call.args):
        out.append(TypeSub(t, p.type))
    by_name = {p.name: p for p in sig.params}
    for k, t in call.kwargs:
        if k in by_name:
            out.append(TypeSub(t, by_name[k].type))
    out.extend(RequiredArg(call.callee, p, n, kw) for p in sig.required)
    return out


def relation_constraints(src: str, rel: str, dst: str, ctx: SolverContext) -> list[Constraint]:
    return [r.instance(src, dst) for r in ctx.rules if r.rel == rel]


def return_constraints(term: TypeTerm, scope: str, ctx: SolverContext) -> list[Constraint]:
    sig = ctx.signatures.get(scope)
    return [] if sig is None else [TypeSub(term, sig.returns)]


def extract(summary: PrefixSummary, ctx: SolverContext) -> list[Constraint]:
    """All constraints implied by a prefix summary, in emission order."""
    out: list[Constraint] = []
    for call in summary.calls:
        out.extend(call_constraints(call, ctx))
    out.extend(Visible(n, summary.scope) for n in summary.names)
    for src, rel, dst in summary.relations:
        out.extend(relation_constraints(src, rel, dst, ctx))
    for t in summary.returns:
        out.extend(return_constraints(t, summary.scope, ctx))
    return out

