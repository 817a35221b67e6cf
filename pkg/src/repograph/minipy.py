"""MiniPy front end: tokenizer, recursive-descent parser, AST and printer.

MiniPy is a closed, indentation-sensitive subset of Python. Parsing is
all-or-nothing per file: any text outside the grammar raises ParseError.
Comments are discarded; docstrings are kept on the owning def/class.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Union

BUILTIN_TYPES = ("list", "dict", "int", "str", "float", "bool", "None", "Any")

KEYWORDS = {
    "import", "from", "class", "def", "return", "if", "elif", "else",
    "while", "for", "in", "pass", "True", "False", "None", "and", "or", "not",
}

# Binary operators by precedence (lowest first).
_PRECEDENCE = [
    ("or",),
    ("and",),
    ("==", "!=", "<", ">", "<=", ">=", "in"),
    ("+", "-"),
    ("*", "/", "//", "%"),
]
BINOP_PREC = {op: i for i, ops in enumerate(_PRECEDENCE) for op in ops}


class ParseError(Exception):
    def __init__(self, line: int, col: int, expected: str, path: str = ""):
        self.line = line
        self.col = col
        self.expected = expected
        self.path = path
        where = f"{path}:" if path else ""
        super().__init__(f"{where}{line}:{col}: expected {expected}")


@dataclass(frozen=True)
class Span:
    line: int
    col: int


def _span() -> Span:
    return field(default=Span(0, 0), compare=False, repr=False)


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Name:
    id: str
    span: Span = _span()


@dataclass(frozen=True)
class Const:
    kind: str  # int | float | str | bool | None
    value: object


@dataclass(frozen=True)
class Attribute:
    value: "Expr"
    attr: str
    span: Span = _span()


@dataclass(frozen=True)
class Call:
    func: "Expr"
    args: tuple["Expr", ...] = ()
    keywords: tuple[tuple[str, "Expr"], ...] = ()


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class ListExpr:
    elts: tuple["Expr", ...] = ()


Expr = Union[Name, Const, Attribute, Call, BinOp, ListExpr]


@dataclass(frozen=True)
class Assign:
    target: Union[Name, Attribute]
    value: Expr
    span: Span = _span()


@dataclass(frozen=True)
class Return:
    value: Expr | None = None


@dataclass(frozen=True)
class ExprStmt:
    value: Expr


@dataclass(frozen=True)
class If:
    test: Expr
    body: tuple["Stmt", ...]
    orelse: tuple["Stmt", ...] = ()


@dataclass(frozen=True)
class While:
    test: Expr
    body: tuple["Stmt", ...]


@dataclass(frozen=True)
class For:
    var: Name
    iter: Expr
    body: tuple["Stmt", ...]


@dataclass(frozen=True)
class Pass:
    pass


Stmt = Union[Assign, Return, ExprStmt, If, While, For, Pass]


@dataclass(frozen=True)
class Param:
    name: str
    type: str | None = None
    default: Const | None = None
    span: Span = _span()


@dataclass(frozen=True)
class FuncDef:
    name: str
    params: tuple[Param, ...] = ()
    returns: str | None = None
    doc: str | None = None
    body: tuple[Stmt, ...] = (Pass(),)
    span: Span = _span()


@dataclass(frozen=True)
class ClassDef:
    name: str
    bases: tuple[str, ...] = ()
    doc: str | None = None
    members: tuple[Union[FuncDef, Assign, Pass], ...] = (Pass(),)
    span: Span = _span()


@dataclass(frozen=True)
class Import:
    module: str
    names: tuple[str, ...] | None = None  # None for plain `import a.b`
    span: Span = _span()


Item = Union[Import, ClassDef, FuncDef, Assign]


@dataclass(frozen=True)
class Module:
    module: str
    items: tuple[Item, ...] = ()


@dataclass(frozen=True)
class SourceFile:
    path: str
    text: str

    @property
    def module(self) -> str:
        return module_name(self.path)


def module_name(path: str) -> str:
    """Dotted module path for a relative file path (``pkg/a.py`` -> ``pkg.a``)."""
    path = path.replace("\\", "/")
    if not path.endswith(".py"):
        raise ValueError(f"not a MiniPy source path: {path!r}")
    parts = path[:-3].split("/")
    if parts[-1] == "__init__" and len(parts) > 1:
        parts = parts[:-1]
    if not all(p.isidentifier() for p in parts):
        raise ValueError(f"path does not map to a module: {path!r}")
    return ".".join(parts)


# ---------------------------------------------------------------------------
# Tokenizer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Tok:
    kind: str  # NAME NUMBER STRING OP NEWLINE INDENT DEDENT EOF
    value: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\f]+)
  | (?P<comment>\#[^\n]*)
  | (?P<string>\"\"\"(?:[^\\]|\\.)*?\"\"\"|'''(?:[^\\]|\\.)*?'''|"(?:[^"\\\n]|\\.)*"|'(?:[^'\\\n]|\\.)*')
  | (?P<number>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>->|==|!=|<=|>=|//|[-+*/%<>=()\[\],:.])
  | (?P<nl>\n)
  | (?P<cont>\\\n)
    """,
    re.VERBOSE | re.DOTALL,
)


def tokenize(text: str) -> list[Tok]:
    toks: list[Tok] = []
    indents = [0]
    depth = 0  # bracket nesting; newlines inside brackets are ignored
    line, line_start = 1, 0
    at_line_start = True
    pos = 0
    n = len(text)
    while pos < n:
        if at_line_start and depth == 0:
            # measure indentation of a logical line
            m = re.compile(r"[ \t\f]*").match(text, pos)
            assert m is not None
            ws = m.group(0)
            col = 0
            for ch in ws:
                col = (col // 8 + 1) * 8 if ch == "\t" else col + 1
            nxt = m.end()
            if nxt >= n or text[nxt] in "\n#" or text.startswith("\r\n", nxt):
                # blank or comment-only line
                end = text.find("\n", nxt)
                if end < 0:
                    pos = n
                    break
                pos = end + 1
                line += 1
                line_start = pos
                continue
            if col > indents[-1]:
                indents.append(col)
                toks.append(Tok("INDENT", "", line, col + 1))
            else:
                while col < indents[-1]:
                    indents.pop()
                    toks.append(Tok("DEDENT", "", line, col + 1))
                if col != indents[-1]:
                    raise ParseError(line, col + 1, "consistent indentation")
            pos = nxt
            at_line_start = False
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            if text[pos] == "\r":
                pos += 1
                continue
            raise ParseError(line, pos - line_start + 1, "a valid token")
        kind = m.lastgroup
        val = m.group(0)
        col = pos - line_start + 1
        if kind == "nl":
            if depth == 0:
                toks.append(Tok("NEWLINE", "", line, col))
                at_line_start = True
            line += 1
            line_start = m.end()
        elif kind == "cont":
            line += 1
            line_start = m.end()
        elif kind == "string":
            toks.append(Tok("STRING", val, line, col))
            extra = val.count("\n")
            if extra:
                line += extra
                line_start = pos + val.rfind("\n") + 1
        elif kind == "number":
            toks.append(Tok("NUMBER", val, line, col))
        elif kind == "name":
            toks.append(Tok("NAME", val, line, col))
        elif kind == "op":
            if val in "([":
                depth += 1
            elif val in ")]":
                depth = max(0, depth - 1)
            toks.append(Tok("OP", val, line, col))
        pos = m.end()
    if toks and toks[-1].kind not in ("NEWLINE", "DEDENT", "INDENT"):
        toks.append(Tok("NEWLINE", "", line, pos - line_start + 1))
    while len(indents) > 1:
        indents.pop()
        toks.append(Tok("DEDENT", "", line, 1))
    toks.append(Tok("EOF", "", line, pos - line_start + 1))
    return toks


_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", "\\": "\\", "'": "'", '"': '"', "0": "\0"}


def _unquote(raw: str) -> str:
    body = raw[3:-3] if raw[:3] in ('"""', "'''") else raw[1:-1]
    out = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\" and i + 1 < len(body):
            nxt = body[i + 1]
            if nxt == "\n":
                i += 2
                continue
            out.append(_ESCAPES.get(nxt, "\\" + nxt))
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

class _Parser:
    def __init__(self, toks: list[Tok], path: str):
        self.toks = toks
        self.i = 0
        self.path = path

    # -- helpers ------------------------------------------------------------
    @property
    def tok(self) -> Tok:
        return self.toks[self.i]

    def error(self, expected: str) -> ParseError:
        t = self.tok
        return ParseError(t.line, t.col, expected, self.path)

    def at(self, kind: str, value: str | None = None) -> bool:
        t = self.tok
        return t.kind == kind and (value is None or t.value == value)

    def at_op(self, value: str) -> bool:
        return self.at("OP", value)

    def at_kw(self, value: str) -> bool:
        return self.at("NAME", value)

    def advance(self) -> Tok:
        t = self.tok
        self.i += 1
        return t

    def expect(self, kind: str, value: str | None = None, what: str | None = None) -> Tok:
        if not self.at(kind, value):
            raise self.error(what or repr(value) if value else (what or kind))
        return self.advance()

    def expect_op(self, value: str) -> Tok:
        return self.expect("OP", value, repr(value))

    def ident(self, what: str = "identifier") -> Tok:
        t = self.tok
        if t.kind != "NAME" or t.value in KEYWORDS:
            raise self.error(what)
        return self.advance()

    def dotted(self) -> str:
        parts = [self.ident().value]
        while self.at_op("."):
            self.advance()
            parts.append(self.ident().value)
        return ".".join(parts)

    # -- file level ---------------------------------------------------------
    def parse_module(self, module: str) -> Module:
        items: list[Item] = []
        seen: dict[str, Tok] = {}
        while not self.at("EOF"):
            if self.at("NEWLINE"):
                self.advance()
                continue
            start = self.tok
            if self.at_kw("import") or self.at_kw("from"):
                items.append(self.parse_import())
                continue
            if self.at_kw("class"):
                item: Item = self.parse_class()
            elif self.at_kw("def"):
                item = self.parse_func()
            elif self.at("NAME") and self.tok.value not in KEYWORDS:
                item = self.parse_assign(module_level=True)
            else:
                raise self.error("import, class, def or assignment")
            name = _declared_name(item)
            if name in seen:
                raise ParseError(start.line, start.col, f"unique top-level name ({name!r} redeclared)", self.path)
            seen[name] = start
            items.append(item)
        return Module(module, tuple(items))

    def parse_import(self) -> Import:
        start = self.tok
        if self.at_kw("import"):
            self.advance()
            mod = self.dotted()
            self.expect("NEWLINE", what="newline")
            return Import(mod, None, Span(start.line, start.col))
        self.advance()
        mod = self.dotted()
        self.expect("NAME", "import", "'import'")
        names = [self.ident().value]
        while self.at_op(","):
            self.advance()
            names.append(self.ident().value)
        self.expect("NEWLINE", what="newline")
        return Import(mod, tuple(names), Span(start.line, start.col))

    def parse_class(self) -> ClassDef:
        self.advance()
        name_tok = self.ident("class name")
        bases: list[str] = []
        if self.at_op("("):
            self.advance()
            bases.append(self.dotted())
            while self.at_op(","):
                self.advance()
                bases.append(self.dotted())
            self.expect_op(")")
        self.expect_op(":")
        doc, members = self.parse_block(self.parse_member)
        seen: set[str] = set()
        for mem in members:
            if isinstance(mem, FuncDef):
                if mem.name in seen:
                    raise ParseError(mem.span.line, mem.span.col, f"unique method name ({mem.name!r} redeclared)", self.path)
                seen.add(mem.name)
        return ClassDef(name_tok.value, tuple(bases), doc, tuple(members), Span(name_tok.line, name_tok.col))

    def parse_member(self):
        if self.at_kw("def"):
            return self.parse_func()
        if self.at_kw("pass"):
            self.advance()
            self.expect("NEWLINE", what="newline")
            return Pass()
        if self.at("NAME") and self.tok.value not in KEYWORDS:
            return self.parse_assign(module_level=True)
        raise self.error("method definition, assignment or 'pass'")

    def parse_func(self) -> FuncDef:
        self.advance()
        name_tok = self.ident("function name")
        self.expect_op("(")
        params: list[Param] = []
        if not self.at_op(")"):
            params.append(self.parse_param())
            while self.at_op(","):
                self.advance()
                params.append(self.parse_param())
        self.expect_op(")")
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise ParseError(name_tok.line, name_tok.col, "distinct parameter names", self.path)
        seen_default = False
        for p in params:
            if p.default is not None:
                seen_default = True
            elif seen_default:
                raise ParseError(p.span.line, p.span.col, "default value (non-default parameter follows default)", self.path)
        returns = None
        if self.at_op("->"):
            self.advance()
            returns = self.parse_type()
        self.expect_op(":")
        doc, body = self.parse_block(self.parse_stmt)
        return FuncDef(name_tok.value, tuple(params), returns, doc, tuple(body), Span(name_tok.line, name_tok.col))

    def parse_param(self) -> Param:
        name_tok = self.ident("parameter name")
        ptype = None
        default = None
        if self.at_op(":"):
            self.advance()
            ptype = self.parse_type()
        if self.at_op("="):
            self.advance()
            default = self.parse_literal()
        return Param(name_tok.value, ptype, default, Span(name_tok.line, name_tok.col))

    def parse_type(self) -> str:
        if self.at_kw("None"):
            self.advance()
            return "None"
        return self.dotted()

    def parse_literal(self) -> Const:
        t = self.tok
        if t.kind == "OP" and t.value == "-" and self.toks[self.i + 1].kind == "NUMBER":
            self.advance()
            c = self.parse_literal()
            return Const(c.kind, -c.value)  # type: ignore[operator]
        if t.kind == "NUMBER":
            self.advance()
            if any(ch in t.value for ch in ".eE"):
                return Const("float", float(t.value))
            return Const("int", int(t.value))
        if t.kind == "STRING":
            self.advance()
            return Const("str", _unquote(t.value))
        if t.kind == "NAME" and t.value in ("True", "False"):
            self.advance()
            return Const("bool", t.value == "True")
        if t.kind == "NAME" and t.value == "None":
            self.advance()
            return Const("None", None)
        raise self.error("literal")

    def parse_block(self, parse_item) -> tuple[str | None, list]:
        self.expect("NEWLINE", what="newline")
        self.expect("INDENT", what="indented block")
        doc = None
        if self.at("STRING") and self.toks[self.i + 1].kind == "NEWLINE":
            doc = _unquote(self.advance().value)
            self.advance()
        items = []
        while not self.at("DEDENT"):
            if self.at("EOF"):
                raise self.error("dedent")
            items.append(parse_item())
        self.advance()
        if not items:
            if doc is None:
                raise self.error("statement")
        return doc, items

    # -- statements -----------------------------------------------------------
    def parse_stmt(self) -> Stmt:
        t = self.tok
        if self.at_kw("return"):
            self.advance()
            value = None
            if not self.at("NEWLINE"):
                value = self.parse_expr()
            self.expect("NEWLINE", what="newline")
            return Return(value)
        if self.at_kw("pass"):
            self.advance()
            self.expect("NEWLINE", what="newline")
            return Pass()
        if self.at_kw("if"):
            return self.parse_if()
        if self.at_kw("while"):
            self.advance()
            test = self.parse_expr()
            self.expect_op(":")
            _, body = self.parse_stmt_block()
            return While(test, tuple(body))
        if self.at_kw("for"):
            self.advance()
            var_tok = self.ident("loop variable")
            self.expect("NAME", "in", "'in'")
            it = self.parse_expr()
            self.expect_op(":")
            _, body = self.parse_stmt_block()
            return For(Name(var_tok.value, Span(var_tok.line, var_tok.col)), it, tuple(body))
        if t.kind == "NAME" and t.value not in KEYWORDS:
            # assignment or expression statement
            save = self.i
            target = self._try_target()
            if target is not None and self.at_op("="):
                self.advance()
                value = self.parse_expr()
                self.expect("NEWLINE", what="newline")
                return Assign(target, value, Span(t.line, t.col))
            self.i = save
        value = self.parse_expr()
        self.expect("NEWLINE", what="newline")
        return ExprStmt(value)

    def parse_stmt_block(self):
        doc, body = self.parse_block(self.parse_stmt)
        if doc is not None:
            # a leading string in a nested block is an expression statement
            body = [ExprStmt(Const("str", doc)), *body]
        return None, body

    def parse_if(self) -> If:
        self.advance()
        test = self.parse_expr()
        self.expect_op(":")
        _, body = self.parse_stmt_block()
        orelse: tuple[Stmt, ...] = ()
        if self.at_kw("elif"):
            orelse = (self.parse_if(),)
        elif self.at_kw("else"):
            self.advance()
            self.expect_op(":")
            _, eb = self.parse_stmt_block()
            orelse = tuple(eb)
        return If(test, tuple(body), orelse)

    def _try_target(self):
        t = self.tok
        if t.kind != "NAME" or (t.value in KEYWORDS):
            return None
        self.advance()
        target: Name | Attribute = Name(t.value, Span(t.line, t.col))
        if self.at_op("."):
            self.advance()
            if not (self.at("NAME") and self.tok.value not in KEYWORDS):
                return None
            a = self.advance()
            target = Attribute(target, a.value, Span(a.line, a.col))
        return target

    def parse_assign(self, module_level: bool) -> Assign:
        t = self.tok
        target = self._try_target()
        if target is None or not self.at_op("="):
            raise self.error("'='")
        if module_level and not isinstance(target, Name):
            raise ParseError(t.line, t.col, "simple name as module-level assignment target", self.path)
        self.advance()
        value = self.parse_expr()
        self.expect("NEWLINE", what="newline")
        return Assign(target, value, Span(t.line, t.col))

    # -- expressions ----------------------------------------------------------
    def parse_expr(self, min_prec: int = 0) -> Expr:
        left = self.parse_postfix()
        while True:
            t = self.tok
            op = t.value if t.kind in ("OP", "NAME") else None
            if op not in BINOP_PREC or BINOP_PREC[op] < min_prec:
                return left
            if t.kind == "OP" and op in ("=",):
                return left
            self.advance()
            right = self.parse_expr(BINOP_PREC[op] + 1)
            left = BinOp(op, left, right)

    def parse_postfix(self) -> Expr:
        e = self.parse_atom()
        while True:
            if self.at_op("."):
                self.advance()
                a = self.ident("attribute name")
                e = Attribute(e, a.value, Span(a.line, a.col))
            elif self.at_op("("):
                self.advance()
                e = self.parse_call_args(e)
            else:
                return e

    def parse_call_args(self, func: Expr) -> Call:
        args: list[Expr] = []
        kws: list[tuple[str, Expr]] = []
        if not self.at_op(")"):
            while True:
                if (self.at("NAME") and self.tok.value not in KEYWORDS
                        and self.toks[self.i + 1].kind == "OP" and self.toks[self.i + 1].value == "="):
                    k = self.advance().value
                    self.advance()
                    if k in (kn for kn, _ in kws):
                        raise self.error(f"distinct keyword arguments ({k!r} repeated)")
                    kws.append((k, self.parse_expr()))
                else:
                    if kws:
                        raise self.error("keyword argument (positional follows keyword)")
                    args.append(self.parse_expr())
                if self.at_op(","):
                    self.advance()
                    continue
                break
        self.expect_op(")")
        return Call(func, tuple(args), tuple(kws))

    def parse_atom(self) -> Expr:
        t = self.tok
        if t.kind == "NAME":
            if t.value in ("True", "False", "None"):
                return self.parse_literal()
            if t.value in KEYWORDS:
                raise self.error("expression")
            self.advance()
            return Name(t.value, Span(t.line, t.col))
        if t.kind in ("NUMBER", "STRING"):
            return self.parse_literal()
        if t.kind == "OP" and t.value == "-" and self.toks[self.i + 1].kind == "NUMBER":
            return self.parse_literal()
        if self.at_op("("):
            self.advance()
            e = self.parse_expr()
            self.expect_op(")")
            return e
        if self.at_op("["):
            self.advance()
            elts: list[Expr] = []
            if not self.at_op("]"):
                elts.append(self.parse_expr())
                while self.at_op(","):
                    self.advance()
                    elts.append(self.parse_expr())
            self.expect_op("]")
            return ListExpr(tuple(elts))
        raise self.error("expression")


def _declared_name(item: Item) -> str:
    if isinstance(item, (FuncDef, ClassDef)):
        return item.name
    if isinstance(item, Assign):
        assert isinstance(item.target, Name)
        return item.target.id
    raise TypeError(item)


def parse_file(file: SourceFile) -> Module:
    """Parse one source file into a Module AST, or raise ParseError."""
    toks = tokenize(file.text) if file.text else [Tok("EOF", "", 1, 1)]
    try:
        return _Parser(toks, file.path).parse_module(file.module)
    except ParseError as exc:
        if not exc.path:
            exc.path = file.path
        raise


def parse_source(text: str, module: str = "m", path: str = "") -> Module:
    toks = tokenize(text) if text else [Tok("EOF", "", 1, 1)]
    return _Parser(toks, path).parse_module(module)


def parse_statements(text: str) -> tuple[Stmt, ...]:
    """Parse a block of function-body statements (used for generated code)."""
    body = "".join("    " + ln + "\n" for ln in text.splitlines()) or "    pass\n"
    mod = parse_source("def _generated():\n" + body)
    fn = mod.items[0]
    assert isinstance(fn, FuncDef)
    return fn.body


# ---------------------------------------------------------------------------
# Pretty printer
# ---------------------------------------------------------------------------

def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t").replace("\r", "\\r").replace("\0", "\\0") + '"'


def format_const(c: Const) -> str:
    if c.kind == "str":
        return _quote(c.value)  # type: ignore[arg-type]
    if c.kind == "None":
        return "None"
    if c.kind == "bool":
        return "True" if c.value else "False"
    if c.kind == "float":
        return repr(float(c.value))  # type: ignore[arg-type]
    return str(c.value)


def format_expr(e: Expr, prec: int = 0) -> str:
    if isinstance(e, Name):
        return e.id
    if isinstance(e, Const):
        s = format_const(e)
        # keep negative literals unambiguous inside binary expressions
        return f"({s})" if s.startswith("-") and prec > 0 else s
    if isinstance(e, Attribute):
        return f"{format_expr(e.value, 99)}.{e.attr}"
    if isinstance(e, Call):
        parts = [format_expr(a) for a in e.args] + [f"{k}={format_expr(v)}" for k, v in e.keywords]
        return f"{format_expr(e.func, 99)}({', '.join(parts)})"
    if isinstance(e, ListExpr):
        return "[" + ", ".join(format_expr(x) for x in e.elts) + "]"
    if isinstance(e, BinOp):
        p = BINOP_PREC[e.op]
        s = f"{format_expr(e.left, p)} {e.op} {format_expr(e.right, p + 1)}"
        return f"({s})" if p < prec else s
    raise TypeError(e)


def _format_block(doc: str | None, body, indent: str, out: list[str]) -> None:
    if doc is not None:
        out.append(indent + _quote(doc))
    for st in body:
        _format_stmt(st, indent, out)


def _format_stmt(st, indent: str, out: list[str]) -> None:
    inner = indent + "    "
    if isinstance(st, Assign):
        out.append(f"{indent}{format_expr(st.target)} = {format_expr(st.value)}")
    elif isinstance(st, Return):
        out.append(f"{indent}return" + (f" {format_expr(st.value)}" if st.value is not None else ""))
    elif isinstance(st, ExprStmt):
        out.append(indent + format_expr(st.value))
    elif isinstance(st, Pass):
        out.append(indent + "pass")
    elif isinstance(st, If):
        out.append(f"{indent}if {format_expr(st.test)}:")
        _format_block(None, st.body, inner, out)
        orelse = st.orelse
        while orelse:
            if len(orelse) == 1 and isinstance(orelse[0], If):
                nested = orelse[0]
                out.append(f"{indent}elif {format_expr(nested.test)}:")
                _format_block(None, nested.body, inner, out)
                orelse = nested.orelse
            else:
                out.append(f"{indent}else:")
                _format_block(None, orelse, inner, out)
                orelse = ()
    elif isinstance(st, While):
        out.append(f"{indent}while {format_expr(st.test)}:")
        _format_block(None, st.body, inner, out)
    elif isinstance(st, For):
        out.append(f"{indent}for {st.var.id} in {format_expr(st.iter)}:")
        _format_block(None, st.body, inner, out)
    elif isinstance(st, FuncDef):
        _format_func(st, indent, out)
    else:
        raise TypeError(st)


def _format_param(p: Param) -> str:
    s = p.name
    if p.type is not None:
        s += f": {p.type}"
    if p.default is not None:
        s += f"={format_const(p.default)}" if p.type is None else f" = {format_const(p.default)}"
    return s


def _format_func(fn: FuncDef, indent: str, out: list[str]) -> None:
    ret = f" -> {fn.returns}" if fn.returns else ""
    out.append(f"{indent}def {fn.name}({', '.join(_format_param(p) for p in fn.params)}){ret}:")
    _format_block(fn.doc, fn.body, indent + "    ", out)


def unparse(mod: Module) -> str:
    """Render a Module as canonical MiniPy text (4-space indentation)."""
    out: list[str] = []
    for item in mod.items:
        if isinstance(item, Import):
            if item.names is None:
                out.append(f"import {item.module}")
            else:
                out.append(f"from {item.module} import {', '.join(item.names)}")
        elif isinstance(item, FuncDef):
            _format_func(item, "", out)
        elif isinstance(item, ClassDef):
            bases = f"({', '.join(item.bases)})" if item.bases else ""
            out.append(f"class {item.name}{bases}:")
            inner = "    "
            if item.doc is not None:
                out.append(inner + _quote(item.doc))
            for mem in item.members:
                _format_stmt(mem, inner, out)
        elif isinstance(item, Assign):
            out.append(f"{format_expr(item.target)} = {format_expr(item.value)}")
        else:
            raise TypeError(item)
    return "\n".join(out) + ("\n" if out else "")
