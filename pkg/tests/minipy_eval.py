"""Tests-only MiniPy evaluator that records call events.

Runs every ``test_*`` function of a set of source files and returns the call
trace. It shares nothing with the graph builder beyond the parser, so the
edges it observes are an independent account of what the program does.
"""

from __future__ import annotations

import operator
from dataclasses import dataclass, field

from repograph.builder import TraceEvent
from repograph.minipy import (
    Assign, Attribute, BinOp, Call, ClassDef, Const, ExprStmt, For, FuncDef, If, Import, ListExpr,
    Module, Name, Pass, Return, SourceFile, While, parse_file,
)

_OPS = {
    "+": operator.add, "-": operator.sub, "*": operator.mul, "/": operator.truediv,
    "//": operator.floordiv, "%": operator.mod, "==": operator.eq, "!=": operator.ne,
    "<": operator.lt, ">": operator.gt, "<=": operator.le, ">=": operator.ge,
    "in": lambda a, b: a in b,
}


@dataclass(frozen=True)
class FuncRef:
    qname: str
    fn: FuncDef
    module: str


@dataclass(frozen=True)
class ClassRef:
    qname: str
    cls: ClassDef
    module: str


@dataclass(frozen=True)
class ModuleRef:
    name: str


@dataclass
class Instance:
    cls: ClassRef
    fields: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Bound:
    self_: Instance
    func: FuncRef


class _Return(Exception):
    def __init__(self, value):
        self.value = value


def type_name(v) -> str:
    if isinstance(v, Instance):
        return v.cls.qname
    if v is None:
        return "None"
    return type(v).__name__


class Interpreter:
    def __init__(self, files: list[SourceFile], max_steps: int = 100_000):
        self.modules: dict[str, Module] = {f.module: parse_file(f) for f in files}
        self.globals: dict[str, dict[str, object]] = {}
        self.events: list[TraceEvent] = []
        self.steps = max_steps
        for name, mod in self.modules.items():
            self.globals[name] = self._bind(mod)
        for name, mod in self.modules.items():
            for item in mod.items:
                if isinstance(item, Import):
                    self._import(name, item)
        for name, mod in self.modules.items():
            for item in mod.items:
                if isinstance(item, Assign) and isinstance(item.target, Name):
                    self.globals[name][item.target.id] = self.eval(item.value, {}, name, name)

    def _bind(self, mod: Module) -> dict:
        env: dict[str, object] = {}
        for item in mod.items:
            if isinstance(item, FuncDef):
                env[item.name] = FuncRef(f"{mod.module}.{item.name}", item, mod.module)
            elif isinstance(item, ClassDef):
                env[item.name] = ClassRef(f"{mod.module}.{item.name}", item, mod.module)
        return env

    def _import(self, module: str, imp: Import) -> None:
        env = self.globals[module]
        if imp.names is None:
            env[imp.module.split(".")[0]] = ModuleRef(imp.module.split(".")[0])
        else:
            for n in imp.names:
                env[n] = self._member(ModuleRef(imp.module), n)

    def _member(self, m: ModuleRef, attr: str):
        sub = f"{m.name}.{attr}"
        if any(k == sub or k.startswith(sub + ".") for k in self.modules):
            return ModuleRef(sub)
        return self.globals[m.name][attr]

    def _class_of(self, name: str, module: str) -> ClassRef:
        head, _, rest = name.partition(".")
        v = self.globals[module][head]
        for part in rest.split(".") if rest else ():
            v = self._member(v, part)  # type: ignore[arg-type]
        assert isinstance(v, ClassRef)
        return v

    def _method(self, cls: ClassRef, name: str) -> FuncRef | None:
        for m in cls.cls.members:
            if isinstance(m, FuncDef) and m.name == name:
                return FuncRef(f"{cls.qname}.{name}", m, cls.module)
        for b in cls.cls.bases:
            got = self._method(self._class_of(b, cls.module), name)
            if got is not None:
                return got
        return None

    # -- execution -------------------------------------------------------

    def run_tests(self) -> list[TraceEvent]:
        for name in sorted(self.modules):
            for item in self.modules[name].items:
                if isinstance(item, FuncDef) and item.name.startswith("test_"):
                    self.invoke(FuncRef(f"{name}.{item.name}", item, name), [], None)
        return self.events

    def invoke(self, f: FuncRef, args: list, caller: str | None, self_: Instance | None = None):
        params = list(f.fn.params)
        local: dict[str, object] = {}
        if self_ is not None:
            local[params.pop(0).name] = self_
        for p, v in zip(params, args):
            local[p.name] = v
        for p in params[len(args):]:
            assert p.default is not None, f"missing argument {p.name} for {f.qname}"
            local[p.name] = p.default.value
        try:
            self.block(f.fn.body, local, f.module, f.qname)
            ret = None
        except _Return as r:
            ret = r.value
        if caller is not None:
            self.events.append(TraceEvent(
                "call", caller, f.qname, tuple((p.name, type_name(local[p.name])) for p in params),
                type_name(ret), "", len(self.events)))
        return ret

    def block(self, body, env: dict, module: str, where: str) -> None:
        for st in body:
            self.steps -= 1
            if self.steps < 0:
                raise RuntimeError("step budget exhausted")
            if isinstance(st, Assign):
                v = self.eval(st.value, env, module, where)
                if isinstance(st.target, Name):
                    env[st.target.id] = v
                else:
                    obj = self.eval(st.target.value, env, module, where)
                    obj.fields[st.target.attr] = v
            elif isinstance(st, Return):
                raise _Return(None if st.value is None else self.eval(st.value, env, module, where))
            elif isinstance(st, ExprStmt):
                self.eval(st.value, env, module, where)
            elif isinstance(st, If):
                branch = st.body if self.eval(st.test, env, module, where) else st.orelse
                self.block(branch, env, module, where)
            elif isinstance(st, While):
                while self.eval(st.test, env, module, where):
                    self.block(st.body, env, module, where)
            elif isinstance(st, For):
                for v in self.eval(st.iter, env, module, where):
                    env[st.var.id] = v
                    self.block(st.body, env, module, where)
            elif not isinstance(st, Pass):
                raise TypeError(st)

    def eval(self, e, env: dict, module: str, where: str):
        if isinstance(e, Const):
            return e.value
        if isinstance(e, Name):
            if e.id in env:
                return env[e.id]
            return self.globals[module][e.id]
        if isinstance(e, ListExpr):
            return [self.eval(x, env, module, where) for x in e.elts]
        if isinstance(e, BinOp):
            a = self.eval(e.left, env, module, where)
            if e.op == "and":
                return a and self.eval(e.right, env, module, where)
            if e.op == "or":
                return a or self.eval(e.right, env, module, where)
            return _OPS[e.op](a, self.eval(e.right, env, module, where))
        if isinstance(e, Attribute):
            v = self.eval(e.value, env, module, where)
            if isinstance(v, ModuleRef):
                return self._member(v, e.attr)
            if isinstance(v, Instance):
                if e.attr in v.fields:
                    return v.fields[e.attr]
                m = self._method(v.cls, e.attr)
                assert m is not None, f"no attribute {e.attr} on {v.cls.qname}"
                return Bound(v, m)
            raise TypeError(f"attribute of {v!r}")
        if isinstance(e, Call):
            f = self.eval(e.func, env, module, where)
            args = [self.eval(a, env, module, where) for a in e.args]
            if isinstance(f, FuncRef):
                return self.invoke(f, args, where)
            if isinstance(f, Bound):
                return self.invoke(f.func, args, where, f.self_)
            if isinstance(f, ClassRef):
                inst = Instance(f)
                init = self._method(f, "__init__")
                if init is not None:
                    self.invoke(init, args, where, inst)
                return inst
            raise TypeError(f"not callable: {f!r}")
        raise TypeError(e)


def run_tests(files: list[SourceFile]) -> list[TraceEvent]:
    return Interpreter(files).run_tests()
