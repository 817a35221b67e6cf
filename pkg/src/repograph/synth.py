"""Synthetic MiniPy repositories and commit streams.

Repositories are modular: package ``p<i>`` holds a fixed number of files
ordered in layers, and code in a file only calls into its own file or lower
layers of the same package. Method names come from a small pool per
package, so polymorphic fan-out stays bounded as the repository grows.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace

from .builder import TraceEvent
from .maintenance import ChangeSet, FileChange
from .minipy import (
    Assign, Attribute, Call, ClassDef, Const, ExprStmt, FuncDef, Import, Module, Name,
    Param, Pass, Return, SourceFile, module_name, unparse,
)

EXTERNAL_MODULES = ("ext", "netlib", "fmtlib")


@dataclass(frozen=True)
class SynthConfig:
    entities: int = 200
    per_file: int = 8
    files_per_package: int = 6
    methods_per_package: int = 3
    polymorphism: float = 0.3
    external_rate: float = 0.15
    seed: int = 0


def _int(v: int) -> Const:
    return Const("int", v)


def _call(func, nargs: int = 0) -> Call:
    return Call(func, tuple(_int(i) for i in range(nargs)))


def _required(fn: FuncDef, method: bool = False) -> int:
    params = fn.params[1:] if method else fn.params
    return sum(1 for p in params if p.default is None)


class SynthRepo:
    """Mutable model of a synthetic repository (one Module AST per file)."""

    def __init__(self, cfg: SynthConfig):
        self.cfg = cfg
        self.rng = random.Random(cfg.seed)
        self.modules: dict[str, Module] = {}
        self.texts: dict[str, str] = {}
        self.graveyard: list[str] = []
        self._uid = 0
        self._seq = 0
        self._generate()
        self._last_declared = set(self.declared())

    # -- helpers ---------------------------------------------------------------
    def _name(self, prefix: str) -> str:
        self._uid += 1
        return f"{prefix}{self._uid}"

    def files(self) -> list[SourceFile]:
        return [SourceFile(p, self.texts[p]) for p in sorted(self.texts)]

    def entity_count(self) -> int:
        n = 0
        for mod in self.modules.values():
            n += 1
            for item in mod.items:
                if isinstance(item, ClassDef):
                    n += 1 + sum(isinstance(m, FuncDef) for m in item.members)
                elif not isinstance(item, Import):
                    n += 1
        return n

    def declared(self) -> list[str]:
        out = []
        for mod in self.modules.values():
            for item in mod.items:
                if isinstance(item, (FuncDef, Assign)):
                    out.append(f"{mod.module}.{_item_name(item)}")
                elif isinstance(item, ClassDef):
                    out.append(f"{mod.module}.{item.name}")
                    out.extend(f"{mod.module}.{item.name}.{m.name}" for m in item.members if isinstance(m, FuncDef))
        return sorted(out)

    # -- initial repository ----------------------------------------------------
    def _generate(self) -> None:
        cfg = self.cfg
        per_file = max(2, cfg.per_file)
        n_files = max(1, -(-cfg.entities // (per_file + 1)))
        n_pkgs = max(1, -(-n_files // cfg.files_per_package))
        made = 0
        for p in range(n_pkgs):
            pool = [f"op{p}_{k}" for k in range(cfg.methods_per_package)]
            layers: list[tuple[str, Module]] = []
            for j in range(cfg.files_per_package):
                if made >= n_files:
                    break
                path = f"p{p}/m{j}.py"
                mod = self._gen_file(module_name(path), per_file, layers, pool)
                layers.append((path, mod))
                self.modules[path] = mod
                made += 1
        for path, mod in self.modules.items():
            self.texts[path] = unparse(mod)

    def _gen_file(self, module: str, budget: int, lower: list[tuple[str, Module]], pool: list[str]) -> Module:
        rng = self.rng
        imports: dict[str, set[str]] = {}
        plain: set[str] = set()
        items: list = []
        local_funcs: list[FuncDef] = []
        local_classes: list[ClassDef] = []
        lower_funcs = [(m.module, it) for _, m in lower for it in m.items if isinstance(it, FuncDef)]
        lower_classes = [(m.module, it) for _, m in lower for it in m.items if isinstance(it, ClassDef)]
        remaining = budget
        while remaining > 0:
            roll = rng.random()
            if roll < 0.25 and remaining >= 2:
                n_methods = min(remaining - 1, rng.randint(1, 3))
                bases: tuple[str, ...] = ()
                if local_classes and rng.random() < 0.4:
                    bases = (rng.choice(local_classes).name,)
                members = []
                for m in rng.sample(pool, min(n_methods, len(pool))):
                    body = [Assign(Attribute(Name("self"), "state"), _int(rng.randint(0, 9)))]
                    if local_funcs and rng.random() < 0.5:
                        f = rng.choice(local_funcs)
                        body.append(ExprStmt(_call(Name(f.name), _required(f))))
                    members.append(FuncDef(m, (Param("self"),), None, None, tuple(body)))
                cls = ClassDef(self._name("C"), bases, None, tuple(members))
                local_classes.append(cls)
                items.append(cls)
                remaining -= 1 + len(members)
            elif roll < 0.33 and local_classes:
                c = rng.choice(local_classes)
                items.append(Assign(Name(self._name("v")), _call(Name(c.name), _ctor_args(c))))
                remaining -= 1
            else:
                fn = self._gen_func(module, local_funcs, local_classes, lower_funcs, lower_classes,
                                    pool, imports, plain)
                local_funcs.append(fn)
                items.append(fn)
                remaining -= 1
        head = [Import(m, tuple(sorted(ns))) for m, ns in sorted(imports.items())]
        head += [Import(m) for m in sorted(plain)]
        return Module(module, tuple(head + items))

    def _gen_func(self, module, local_funcs, local_classes, lower_funcs, lower_classes,
                  pool, imports, plain) -> FuncDef:
        rng = self.rng
        params: list[Param] = []
        body: list = []
        for _ in range(rng.randint(1, 3)):
            r = rng.random()
            if r < 0.35 and (local_funcs or lower_funcs):
                use_local = local_funcs and (not lower_funcs or rng.random() < 0.5)
                if use_local:
                    f = rng.choice(local_funcs)
                else:
                    mod, f = rng.choice(lower_funcs)
                    imports.setdefault(mod, set()).add(f.name)
                body.append(ExprStmt(_call(Name(f.name), _required(f))))
            elif r < 0.55 and (local_classes or lower_classes):
                cands = [(module, c) for c in local_classes] + lower_classes
                mod, c = rng.choice(cands)
                if mod != module:
                    imports.setdefault(mod, set()).add(c.name)
                meths = [m for m in c.members if isinstance(m, FuncDef)]
                pname = f"o{len(params)}"
                params.append(Param(pname, c.name))
                if meths:
                    body.append(ExprStmt(_call(Attribute(Name(pname), rng.choice(meths).name))))
            elif r < 0.55 + self.cfg.polymorphism:
                pname = f"x{len(params)}"
                params.append(Param(pname))
                body.append(ExprStmt(_call(Attribute(Name(pname), rng.choice(pool)))))
            elif r < 0.55 + self.cfg.polymorphism + self.cfg.external_rate:
                ext = rng.choice(EXTERNAL_MODULES)
                plain.add(ext)
                body.append(ExprStmt(_call(Attribute(Name(ext), f"call{rng.randint(0, 3)}"), 1)))
            else:
                body.append(Assign(Name("tick"), _int(rng.randint(0, 99))))
        returns = None
        if local_classes and rng.random() < 0.25:
            c = rng.choice(local_classes)
            returns = c.name
            body.append(Return(_call(Name(c.name), _ctor_args(c))))
        elif rng.random() < 0.3:
            returns = rng.choice(["int", "str"])
            body.append(Return(_int(1) if returns == "int" else Const("str", "s")))
        return FuncDef(self._name("f"), tuple(params), returns, None, tuple(body))

    # -- scaling commits -------------------------------------------------------
    def local_commit(self, k: int = 10, signature_changes: int = 2) -> ChangeSet:
        """Edit ``k`` distinct top-level functions; the first few change signature-level."""
        rng = self.rng
        slots = [(path, i) for path, mod in sorted(self.modules.items())
                 for i, it in enumerate(mod.items) if isinstance(it, FuncDef)]
        chosen = rng.sample(slots, min(k, len(slots)))
        new_mods = dict()
        for n, (path, i) in enumerate(chosen):
            mod = new_mods.get(path, self.modules[path])
            fn = mod.items[i]
            assert isinstance(fn, FuncDef)
            body = [st for st in fn.body if not (isinstance(st, Assign) and st.target == Name("tick"))]
            body.append(Assign(Name("tick"), _int(self._next_seq())))
            fn = replace(fn, body=tuple(body))
            if n < signature_changes:
                fn = replace(fn, params=fn.params + (Param(self._name("opt"), "int", _int(0)),))
            items = list(mod.items)
            items[i] = fn
            new_mods[path] = replace(mod, items=tuple(items))
        return self._commit(new_mods, {}, ())

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    # -- random commits --------------------------------------------------------
    def random_commit(self, n_ops: int | None = None, event_rate: float = 0.4) -> ChangeSet:
        rng = self.rng
        mods: dict[str, Module | None] = {}
        texts: dict[str, str] = {}
        for _ in range(n_ops if n_ops is not None else rng.randint(1, 3)):
            op = rng.choices(_OPS, weights=[w for _, w in _OP_WEIGHTS])[0]
            op(self, mods, texts)
        events: tuple[TraceEvent, ...] = ()
        if rng.random() < event_rate:
            events = tuple(self.random_events(rng.randint(1, 8), mods))
        if not any(self._text_for(p, mods, texts) != self.texts.get(p) for p in set(mods) | set(texts)) and not events:
            events = tuple(self.random_events(1, mods))
        return self._commit(mods, texts, events)

    def _current(self, path: str, mods: dict) -> Module | None:
        return mods[path] if path in mods else self.modules.get(path)

    def _text_for(self, path: str, mods: dict, texts: dict) -> str | None:
        if path in texts:
            return texts[path]
        mod = self._current(path, mods)
        return None if mod is None else unparse(mod)

    def _commit(self, mods: dict, texts: dict, events) -> ChangeSet:
        changes = []
        for path in sorted(set(mods) | set(texts)):
            new_text = self._text_for(path, mods, texts)
            old_text = self.texts.get(path)
            if new_text == old_text:
                continue
            changes.append(FileChange(path, old_text, new_text))
            if path in mods:
                if mods[path] is None:
                    self.modules.pop(path, None)
                else:
                    self.modules[path] = mods[path]
            if new_text is None:
                self.texts.pop(path, None)
            else:
                self.texts[path] = new_text
        now = set(self.declared())
        self.graveyard.extend(sorted(self._last_declared - now))
        self._last_declared = now
        return ChangeSet(tuple(changes), tuple(events))

    def random_events(self, n: int, mods: dict | None = None) -> list[TraceEvent]:
        rng = self.rng
        names = self.declared()
        funcs = [x for x in names if x.rsplit(".", 1)[-1].startswith(("f", "op"))]
        classes = [x for x in names if x.rsplit(".", 1)[-1].startswith("C")]
        out = []
        for _ in range(n):
            pick = rng.random()
            caller = rng.choice(funcs or names or ["p0.m0.f0"])
            if pick < 0.1 and self.graveyard:
                caller = rng.choice(self.graveyard)
            kind = rng.choices(["call", "instance", "mutate"], weights=[6, 2, 1])[0]
            if kind == "instance" and classes:
                callee = rng.choice(classes)
            elif rng.random() < 0.15:
                callee = f"{rng.choice(EXTERNAL_MODULES)}.call{rng.randint(0, 3)}"
            elif rng.random() < 0.1 and self.graveyard:
                callee = rng.choice(self.graveyard)
            elif rng.random() < 0.05:
                callee = f"p0.m0.ghost{rng.randint(0, 3)}"
            else:
                callee = rng.choice(funcs or names or ["p0.m0.f0"])
            args: tuple[tuple[str, str], ...] = ()
            ret = None
            if kind == "call":
                types = ["int", "str"] + classes[:5]
                args = tuple((p, rng.choice(types)) for p in ("o0", "x0")[: rng.randint(0, 2)])
                ret = rng.choice([None, "int", "str"] + classes[:3])
            out.append(TraceEvent(kind, caller, callee, args, ret, "t", self._next_seq()))
        return out


def _ctor_args(c: ClassDef) -> int:
    init = next((m for m in c.members if isinstance(m, FuncDef) and m.name == "__init__"), None)
    return 0 if init is None else _required(init, method=True)


def _item_name(item) -> str:
    if isinstance(item, Assign):
        assert isinstance(item.target, Name)
        return item.target.id
    return item.name


# ---------------------------------------------------------------------------
# Mutation operators: each edits the pending module map in place
# ---------------------------------------------------------------------------

def _pick_file(repo: SynthRepo, mods: dict) -> str | None:
    paths = sorted(p for p in set(repo.modules) | set(mods) if repo._current(p, mods) is not None)
    return repo.rng.choice(paths) if paths else None


def _all_funcs(repo: SynthRepo, mods: dict) -> list[tuple[str, FuncDef]]:
    out = []
    for p in sorted(set(repo.modules) | set(mods)):
        mod = repo._current(p, mods)
        if mod is not None:
            out.extend((mod.module, it) for it in mod.items if isinstance(it, FuncDef))
    return out


def _all_classes(repo: SynthRepo, mods: dict) -> list[tuple[str, ClassDef]]:
    out = []
    for p in sorted(set(repo.modules) | set(mods)):
        mod = repo._current(p, mods)
        if mod is not None:
            out.extend((mod.module, it) for it in mod.items if isinstance(it, ClassDef))
    return out


def _with_import(mod: Module, source: str, name: str) -> Module:
    if source == mod.module:
        return mod
    for it in mod.items:
        if isinstance(it, Import) and it.module == source and it.names and name in it.names:
            return mod
    return replace(mod, items=(Import(source, (name,)),) + mod.items)


def _random_stmt(repo: SynthRepo, mods: dict, mod: Module, params: list[Param]) -> tuple[Module, object]:
    rng = repo.rng
    r = rng.random()
    funcs = _all_funcs(repo, mods)
    classes = _all_classes(repo, mods)
    if r < 0.4 and funcs:
        src, f = rng.choice(funcs)
        mod = _with_import(mod, src, f.name)
        return mod, ExprStmt(_call(Name(f.name), _required(f)))
    if r < 0.6 and classes:
        src, c = rng.choice(classes)
        mod = _with_import(mod, src, c.name)
        pname = f"o{len(params)}"
        params.append(Param(pname, c.name))
        meths = [m.name for m in c.members if isinstance(m, FuncDef)] or ["run"]
        return mod, ExprStmt(_call(Attribute(Name(pname), rng.choice(meths))))
    if r < 0.75:
        pname = f"x{len(params)}"
        params.append(Param(pname))
        return mod, ExprStmt(_call(Attribute(Name(pname), f"op{rng.randint(0, 1)}_{rng.randint(0, 2)}")))
    if r < 0.85:
        ext = rng.choice(EXTERNAL_MODULES)
        if not any(isinstance(it, Import) and it.module == ext and it.names is None for it in mod.items):
            mod = replace(mod, items=(Import(ext),) + mod.items)
        return mod, ExprStmt(_call(Attribute(Name(ext), "send"), 1))
    return mod, Assign(Name("tick"), _int(rng.randint(0, 999)))


def _replace_item(mod: Module, idx: int, item) -> Module:
    items = list(mod.items)
    if item is None:
        del items[idx]
    else:
        items[idx] = item
    return replace(mod, items=tuple(items))


def _item_slots(mod: Module, kinds) -> list[int]:
    return [i for i, it in enumerate(mod.items) if isinstance(it, kinds)]


def op_body(repo: SynthRepo, mods: dict, texts: dict) -> None:
    path = _pick_file(repo, mods)
    if path is None:
        return
    mod = repo._current(path, mods)
    slots = _item_slots(mod, (FuncDef, ClassDef))
    if not slots:
        return op_add_func(repo, mods, texts)
    i = repo.rng.choice(slots)
    item = mod.items[i]
    if isinstance(item, ClassDef):
        mslots = [j for j, m in enumerate(item.members) if isinstance(m, FuncDef)]
        if not mslots:
            return
        j = repo.rng.choice(mslots)
        fn = item.members[j]
        params = list(fn.params)
        mod2, st = _random_stmt(repo, mods, mod, params)
        if len(params) != len(fn.params):
            st = Assign(Attribute(Name("self"), "state"), _int(repo.rng.randint(0, 99)))
        members = list(item.members)
        members[j] = replace(fn, body=fn.body + (st,))
        i2 = mod2.items.index(item)
        mods[path] = _replace_item(mod2, i2, replace(item, members=tuple(members)))
        return
    params = list(item.params)
    mod2, st = _random_stmt(repo, mods, mod, params)
    body = item.body
    if repo.rng.random() < 0.3 and len(body) > 1:
        body = body[1:]
    new = replace(item, params=tuple(params), body=body + (st,))
    mods[path] = _replace_item(mod2, mod2.items.index(item), new)


def op_signature(repo: SynthRepo, mods: dict, texts: dict) -> None:
    rng = repo.rng
    path = _pick_file(repo, mods)
    if path is None:
        return
    mod = repo._current(path, mods)
    slots = _item_slots(mod, FuncDef)
    if not slots:
        return
    i = rng.choice(slots)
    fn = mod.items[i]
    r = rng.random()
    classes = [c for _, c in _all_classes(repo, mods)]
    if r < 0.35:
        choices = ["int", "str", None] + [c.name for c in classes if c in mod.items]
        fn = replace(fn, returns=rng.choice(choices))
    elif r < 0.7:
        fn = replace(fn, params=fn.params + (Param(repo._name("a"), rng.choice(["int", "str", None]),
                                                   _int(0) if rng.random() < 0.5 else None),))
        fn = _fix_defaults(fn)
    elif fn.params:
        k = rng.randrange(len(fn.params))
        fn = replace(fn, params=fn.params[:k] + fn.params[k + 1:])
    mods[path] = _replace_item(mod, i, fn)


def _fix_defaults(fn: FuncDef) -> FuncDef:
    # defaults must trail
    seen_default = False
    params = []
    for p in fn.params:
        if p.default is not None:
            seen_default = True
        elif seen_default:
            p = replace(p, default=_int(0))
        params.append(p)
    return replace(fn, params=tuple(params))


def op_add_func(repo: SynthRepo, mods: dict, texts: dict) -> None:
    path = _pick_file(repo, mods)
    if path is None:
        return op_add_file(repo, mods, texts)
    mod = repo._current(path, mods)
    params: list[Param] = []
    mod, st = _random_stmt(repo, mods, mod, params)
    fn = FuncDef(repo._name("f"), tuple(params), None, "generated helper", (st,))
    mods[path] = replace(mod, items=mod.items + (fn,))


def op_add_var(repo: SynthRepo, mods: dict, texts: dict) -> None:
    path = _pick_file(repo, mods)
    if path is None:
        return
    mod = repo._current(path, mods)
    classes = [it for it in mod.items if isinstance(it, ClassDef)]
    value = _call(Name(classes[0].name), _ctor_args(classes[0])) if classes else _int(1)
    mods[path] = replace(mod, items=mod.items + (Assign(Name(repo._name("v")), value),))


def op_remove_item(repo: SynthRepo, mods: dict, texts: dict) -> None:
    path = _pick_file(repo, mods)
    if path is None:
        return
    mod = repo._current(path, mods)
    slots = _item_slots(mod, (FuncDef, ClassDef, Assign))
    if slots:
        mods[path] = _replace_item(mod, repo.rng.choice(slots), None)


def op_rename_item(repo: SynthRepo, mods: dict, texts: dict) -> None:
    path = _pick_file(repo, mods)
    if path is None:
        return
    mod = repo._current(path, mods)
    slots = _item_slots(mod, (FuncDef, ClassDef))
    if slots:
        i = repo.rng.choice(slots)
        item = mod.items[i]
        prefix = "C" if isinstance(item, ClassDef) else "f"
        mods[path] = _replace_item(mod, i, replace(item, name=repo._name(prefix)))


def op_add_class(repo: SynthRepo, mods: dict, texts: dict) -> None:
    rng = repo.rng
    path = _pick_file(repo, mods)
    if path is None:
        return
    mod = repo._current(path, mods)
    bases: tuple[str, ...] = ()
    classes = _all_classes(repo, mods)
    if classes and rng.random() < 0.5:
        src, base = rng.choice(classes)
        mod = _with_import(mod, src, base.name)
        bases = (base.name,)
    members = [FuncDef(f"op{rng.randint(0, 1)}_{rng.randint(0, 2)}", (Param("self"),), None, None,
                       (Assign(Attribute(Name("self"), "state"), _int(1)),))]
    if rng.random() < 0.3:
        members.append(FuncDef("__init__", (Param("self"), Param("n", "int")), None, None,
                               (Assign(Attribute(Name("self"), "n"), Name("n")),)))
    cls = ClassDef(repo._name("C"), bases, "generated class", tuple(_unique_members(members)))
    mods[path] = replace(mod, items=mod.items + (cls,))


def _unique_members(members):
    seen = set()
    out = []
    for m in members:
        if m.name not in seen:
            seen.add(m.name)
            out.append(m)
    return out


def op_change_bases(repo: SynthRepo, mods: dict, texts: dict) -> None:
    rng = repo.rng
    path = _pick_file(repo, mods)
    if path is None:
        return
    mod = repo._current(path, mods)
    slots = _item_slots(mod, ClassDef)
    if not slots:
        return
    i = rng.choice(slots)
    cls = mod.items[i]
    others = [(s, c) for s, c in _all_classes(repo, mods) if c.name != cls.name]
    if cls.bases and (rng.random() < 0.5 or not others):
        new = replace(cls, bases=())
    elif others:
        src, base = rng.choice(others)
        mod = _with_import(mod, src, base.name)
        i = mod.items.index(cls)
        new = replace(cls, bases=(base.name,))
    else:
        return
    mods[path] = _replace_item(mod, i, new)


def op_add_method(repo: SynthRepo, mods: dict, texts: dict) -> None:
    rng = repo.rng
    path = _pick_file(repo, mods)
    if path is None:
        return
    mod = repo._current(path, mods)
    slots = _item_slots(mod, ClassDef)
    if not slots:
        return op_add_class(repo, mods, texts)
    i = rng.choice(slots)
    cls = mod.items[i]
    name = f"op{rng.randint(0, 1)}_{rng.randint(0, 2)}"
    if any(isinstance(m, FuncDef) and m.name == name for m in cls.members):
        return
    meth = FuncDef(name, (Param("self"),), None, None, (ExprStmt(_call(Attribute(Name("self"), "op0_0"))),))
    members = tuple(m for m in cls.members if not isinstance(m, Pass)) + (meth,)
    mods[path] = _replace_item(mod, i, replace(cls, members=members))


def op_remove_method(repo: SynthRepo, mods: dict, texts: dict) -> None:
    rng = repo.rng
    path = _pick_file(repo, mods)
    if path is None:
        return
    mod = repo._current(path, mods)
    slots = [i for i in _item_slots(mod, ClassDef)
             if sum(isinstance(m, FuncDef) for m in mod.items[i].members) > 1]
    if not slots:
        return
    i = rng.choice(slots)
    cls = mod.items[i]
    mslots = [j for j, m in enumerate(cls.members) if isinstance(m, FuncDef)]
    j = rng.choice(mslots)
    mods[path] = _replace_item(mod, i, replace(cls, members=cls.members[:j] + cls.members[j + 1:]))


def op_add_import(repo: SynthRepo, mods: dict, texts: dict) -> None:
    rng = repo.rng
    path = _pick_file(repo, mods)
    if path is None:
        return
    mod = repo._current(path, mods)
    r = rng.random()
    if r < 0.3:
        item = Import(rng.choice(EXTERNAL_MODULES), (f"name{rng.randint(0, 3)}",))
    elif r < 0.5:
        others = [repo._current(p, mods) for p in sorted(set(repo.modules) | set(mods))]
        others = [m for m in others if m is not None and m.module != mod.module]
        if not others:
            return
        item = Import(rng.choice(others).module)
    else:
        funcs = [(s, f) for s, f in _all_funcs(repo, mods) if s != mod.module]
        if not funcs:
            return
        src, f = rng.choice(funcs)
        name = f.name if rng.random() < 0.8 else repo._name("missing")
        item = Import(src, (name,))
    mods[path] = replace(mod, items=(item,) + mod.items)


def op_remove_import(repo: SynthRepo, mods: dict, texts: dict) -> None:
    path = _pick_file(repo, mods)
    if path is None:
        return
    mod = repo._current(path, mods)
    slots = _item_slots(mod, Import)
    if slots:
        mods[path] = _replace_item(mod, repo.rng.choice(slots), None)


def op_add_file(repo: SynthRepo, mods: dict, texts: dict) -> None:
    rng = repo.rng
    pkg = f"p{rng.randint(0, 2)}"
    path = f"{pkg}/n{repo._name('')}.py"
    mod = Module(module_name(path), ())
    for _ in range(rng.randint(1, 3)):
        params: list[Param] = []
        mod, st = _random_stmt(repo, mods, mod, params)
        mod = replace(mod, items=mod.items + (FuncDef(repo._name("f"), tuple(params), None, None, (st,)),))
    mods[path] = mod


def op_remove_file(repo: SynthRepo, mods: dict, texts: dict) -> None:
    path = _pick_file(repo, mods)
    if path is not None and len(repo.modules) > 2:
        mods[path] = None
        texts.pop(path, None)


def op_move_item(repo: SynthRepo, mods: dict, texts: dict) -> None:
    src_path = _pick_file(repo, mods)
    dst_path = _pick_file(repo, mods)
    if src_path is None or dst_path is None or src_path == dst_path:
        return
    src = repo._current(src_path, mods)
    slots = _item_slots(src, FuncDef)
    if not slots:
        return
    i = repo.rng.choice(slots)
    fn = src.items[i]
    dst = repo._current(dst_path, mods)
    if any(_item_name(it) == fn.name for it in dst.items if not isinstance(it, Import)):
        return
    mods[src_path] = _replace_item(src, i, None)
    mods[dst_path] = replace(dst, items=dst.items + (fn,))


def op_format(repo: SynthRepo, mods: dict, texts: dict) -> None:
    path = _pick_file(repo, mods)
    if path is None or path in mods:
        return
    texts[path] = reformat(repo.texts[path], repo.rng)


def op_break(repo: SynthRepo, mods: dict, texts: dict) -> None:
    path = _pick_file(repo, mods)
    if path is None or path in mods:
        return
    texts[path] = repo.texts[path] + "def broken(:\n    pass\n"


_OP_WEIGHTS = [
    (op_body, 26), (op_signature, 10), (op_add_func, 8), (op_add_var, 3), (op_remove_item, 6),
    (op_rename_item, 6), (op_add_class, 5), (op_change_bases, 4), (op_add_method, 5),
    (op_remove_method, 4), (op_add_import, 5), (op_remove_import, 4), (op_add_file, 3),
    (op_remove_file, 2), (op_move_item, 3), (op_format, 6), (op_break, 3),
]
_OPS = [op for op, _ in _OP_WEIGHTS]


# ---------------------------------------------------------------------------
# Formatting-only mutations
# ---------------------------------------------------------------------------

def reformat(text: str, rng: random.Random) -> str:
    """Rewrite layout without changing the AST: comments, blank lines, spacing."""
    out = []
    for line in text.splitlines():
        stripped = line.lstrip(" ")
        indent = line[: len(line) - len(stripped)]
        r = rng.random()
        if r < 0.15:
            out.append(f"{indent}# note {rng.randint(0, 999)}")
        elif r < 0.25:
            out.append("")
        if stripped and rng.random() < 0.2:
            line = line.rstrip() + f"  # trailing {rng.randint(0, 9)}"
        if stripped and rng.random() < 0.2:
            line = line.rstrip() + "   "
        if rng.random() < 0.2 and ", " in line and '"' not in line:
            line = line.replace(", ", " ,  ", 1)
        if rng.random() < 0.2 and " = " in line and '"' not in line:
            line = line.replace(" = ", "=", 1)
        out.append(line)
    if rng.random() < 0.5:
        out.append("")
        out.append("# end of file")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Random queries
# ---------------------------------------------------------------------------

_QUERY_KINDS = ("FUNC", "CLASS", "VAR", "FILE", "TEST", "API")
_QUERY_RELS = ("CALLS", "DEFINES", "IMPORTS", "MUTATES", "RETURNS", "INSTANCEOF")


def random_query(rng: random.Random, names: list[str], max_vars: int = 4) -> str:
    """A random well-formed query; node names are drawn from ``names``."""
    n_vars = rng.randint(1, max_vars)
    variables = [f"v{i}" for i in range(n_vars)]
    used: list[str] = []

    def node(var: str) -> str:
        s = var
        if rng.random() < 0.4:
            s += ":" + rng.choice(_QUERY_KINDS)
        if names and rng.random() < 0.25:
            s += ' {name="' + rng.choice(names) + '"}'
        elif rng.random() < 0.1:
            s += ' {visibility="' + rng.choice(["pub", "priv"]) + '"}'
        return f"({s})"

    def edge() -> str:
        rel = rng.choice(_QUERY_RELS)
        r = rng.random()
        if r < 0.25:
            return f"<-[:{rel}]-"
        rep = ""
        if rng.random() < 0.35:
            lo = rng.randint(1, 3)
            rep = f"*{lo}..{rng.randint(lo, 4)}"
        return f"-[:{rel}{rep}]" + ("->" if r < 0.8 else "-")

    patterns = []
    pending_vars = list(variables)
    while pending_vars:
        length = rng.randint(1, min(3, len(pending_vars) + (1 if used else 0)))
        chain = []
        for _ in range(length):
            if used and (not pending_vars or rng.random() < 0.25):
                chain.append(rng.choice(used))
            else:
                chain.append(pending_vars.pop(0))
        used.extend(v for v in chain if v not in used)
        s = node(chain[0])
        for v in chain[1:]:
            s += edge() + node(v)
        patterns.append(s)
    text = "MATCH " + ", ".join(patterns)
    if names and rng.random() < 0.3:
        v = rng.choice(used)
        text += f' WHERE {v}.{rng.choice(["kind", "module", "name"])}="'
        attr_val = rng.choice(names)
        text += (attr_val.rsplit(".", 1)[0] if "module" in text[-10:] else attr_val) + '"'
    rets = rng.sample(used, rng.randint(1, len(used)))
    return text + " RETURN " + ", ".join(rets)
