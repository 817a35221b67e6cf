from __future__ import annotations

import re

from repograph.entities import (
    CLASS, FILE, FUNC, TEST, VAR, EntityDelta, canonical_hash, entity_hashes, entity_slices,
    enumerate_entities, semantic_diff,
)
from repograph.minipy import SourceFile, parse_file, parse_source
from repograph.synth import SynthConfig, SynthRepo


def kinds(text: str, module: str) -> dict[str, str]:
    return {e.qualified_name: e.kind for e in enumerate_entities(parse_source(text, module))}


def test_class_with_method():
    got = kinds("class C:\n    def m(self):\n        pass\n", "pkg.a")
    assert got == {"pkg.a": FILE, "pkg.a.C": CLASS, "pkg.a.C.m": FUNC}


def test_test_functions_get_test_kind():
    assert kinds("def test_one():\n    pass\n", "tests.test_x")["tests.test_x.test_one"] == TEST


def test_module_variable():
    assert kinds("x = 3\n", "pkg.a")["pkg.a.x"] == VAR


def test_signature_qualifies_types_and_drops_self():
    text = "from pkg.models import User\nclass C:\n    def m(self, u: User, n: int = 1) -> str:\n        pass\n"
    ents = {e.qualified_name: e for e in enumerate_entities(parse_source(text, "pkg.a"))}
    sig = ents["pkg.a.C.m"].signature
    assert [(p.name, p.type, p.has_default) for p in sig.params] == [
        ("u", "pkg.models.User", False), ("n", "int", True)]
    assert sig.returns == "str" and sig.required == ("u",)


def _digest(text: str, name: str = "m.f") -> int:
    return entity_hashes(parse_source(text, "m"))[name]


def test_hash_ignores_layout_and_comments():
    assert _digest("def f():\n  return 1\n") == _digest("def f():\n\n    return 1  # note\n")


def test_hash_sees_literal_changes():
    assert _digest("def f():\n    return 1\n") != _digest("def f():\n    return 2\n")


def test_hash_is_deterministic():
    text = "class C:\n    def m(self):\n        return 1\n"
    assert entity_hashes(parse_source(text, "m")) == entity_hashes(parse_source(text, "m"))


def test_reindent_gives_empty_delta():
    for f in SynthRepo(SynthConfig(entities=40, seed=3)).files():
        reindented = re.sub(r"^((?:    )+)", lambda m: "  " * (len(m.group(1)) // 4), f.text, flags=re.M)
        old, new = parse_file(f), parse_file(SourceFile(f.path, reindented))
        # recompute the digests of both sides directly
        slices_old, slices_new = entity_slices(old), entity_slices(new)
        assert slices_old.keys() == slices_new.keys()
        assert all(canonical_hash(k, slices_old[k]) == canonical_hash(k, slices_new[k]) for k in slices_old)
        assert semantic_diff(old, new) == EntityDelta()


def test_rename_is_add_plus_remove():
    d = semantic_diff(parse_source("def f():\n    pass\n", "m"), parse_source("def h():\n    pass\n", "m"))
    assert d.added == {"m.h"} and d.removed == {"m.f"} and not d.changed


def test_body_change_marks_changed():
    d = semantic_diff(parse_source("def f():\n    return 1\n", "m"), parse_source("def f():\n    return 2\n", "m"))
    assert d.changed == {"m.f"} and not d.added and not d.removed


def test_method_change_does_not_change_class():
    old = parse_source("class C:\n    def m(self):\n        return 1\n", "m")
    new = parse_source("class C:\n    def m(self):\n        return 2\n", "m")
    assert semantic_diff(old, new).changed == {"m.C.m"}
