"""Nominal subtyping lattice over MiniPy type terms.

Builtins are mutually incomparable, every type is below ``Any``, a class is
below each of its ancestors, and ``None`` is below every class type.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping

from .minipy import BUILTIN_TYPES

ANY = "Any"
NONE = "None"


class CyclicHierarchy(ValueError):
    pass


def is_builtin(t: str) -> bool:
    return t in BUILTIN_TYPES


class TypeLattice:
    def __init__(self, bases: Mapping[str, Iterable[str]] | None = None, *, strict: bool = False):
        self.bases = {c: tuple(bs) for c, bs in (bases or {}).items()}
        self._anc: dict[str, frozenset[str]] = {}
        if strict:
            self.check_acyclic()

    @property
    def classes(self) -> frozenset[str]:
        return frozenset(self.bases)

    def check_acyclic(self) -> None:
        state: dict[str, int] = {}

        def visit(c: str, path: list[str]) -> None:
            st = state.get(c, 0)
            if st == 1:
                raise CyclicHierarchy(" -> ".join(path + [c]))
            if st == 2:
                return
            state[c] = 1
            for b in self.bases.get(c, ()):
                visit(b, path + [c])
            state[c] = 2

        for c in sorted(self.bases):
            visit(c, [])

    def ancestors(self, c: str) -> frozenset[str]:
        """Reflexive ancestor set of a class name (cycle tolerant)."""
        hit = self._anc.get(c)
        if hit is not None:
            return hit
        seen = {c}
        stack = [c]
        while stack:
            for b in self.bases.get(stack.pop(), ()):
                if b not in seen:
                    seen.add(b)
                    stack.append(b)
        res = frozenset(seen)
        self._anc[c] = res
        return res

    def leq(self, a: str, b: str) -> bool:
        if a == b or b == ANY:
            return True
        if a == ANY:
            return False
        if is_builtin(b):
            return False
        # b is nominal from here on
        if a == NONE:
            return True
        if is_builtin(a):
            return False
        return b in self.ancestors(a)

    def most_specific(self, types: Iterable[str]) -> tuple[str, bool]:
        """Unique lattice-minimal type of a set, as ``(type, ambiguous)``.

        Falls back to ``Any`` with ``ambiguous=True`` when the minimal
        elements are incomparable.
        """
        ts = sorted(set(types))
        if not ts:
            return ANY, False
        for m in ts:
            if all(self.leq(m, t) for t in ts):
                return m, False
        return ANY, True
