from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from repograph.minipy import (
    Call, Const, FuncDef, Name, ParseError, Return, SourceFile, module_name, parse_file, parse_source,
    parse_statements, unparse,
)
from repograph.synth import SynthConfig, SynthRepo, reformat


def test_function_with_annotations():
    mod = parse_file(SourceFile("m.py", "def f(x: int) -> str:\n    return g(x)\n"))
    (fn,) = mod.items
    assert isinstance(fn, FuncDef)
    assert fn.name == "f" and fn.returns == "str"
    assert [(p.name, p.type) for p in fn.params] == [("x", "int")]
    assert fn.body == (Return(Call(Name("g"), (Name("x"),))),)


def test_empty_file():
    assert parse_file(SourceFile("m.py", "")).items == ()


def test_error_points_at_offending_column():
    with pytest.raises(ParseError) as exc:
        parse_file(SourceFile("pkg/m.py", "def f(:"))
    assert (exc.value.line, exc.value.col) == (1, 7)
    assert exc.value.path == "pkg/m.py"


@pytest.mark.parametrize("text", [
    "def f(:\n",
    "class C(:\n    pass\n",
    "x = \n",
    "def f():\nreturn 1\n",
    "lambda x: x\n",
    "def f():\n    return [1, 2\n",
])
def test_rejects_text_outside_grammar(text):
    with pytest.raises(ParseError):
        parse_source(text)


def test_module_names():
    assert module_name("pkg/a.py") == "pkg.a"
    assert module_name("pkg/__init__.py") == "pkg"
    with pytest.raises(ValueError):
        module_name("pkg/a.txt")


def test_docstrings_kept_and_comments_dropped():
    mod = parse_source('def f():\n    """Load it."""\n    # note\n    return 1\n')
    fn = mod.items[0]
    assert fn.doc == "Load it."
    assert fn.body == (Return(Const("int", 1)),)


def test_parse_statements_block():
    body = parse_statements("x = f(1)\nreturn x")
    assert len(body) == 2 and isinstance(body[1], Return)


def test_unparse_round_trip_on_synthetic_repos():
    for seed in range(5):
        for f in SynthRepo(SynthConfig(entities=40, seed=seed)).files():
            mod = parse_file(f)
            assert parse_source(unparse(mod), mod.module) == mod


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_formatting_never_changes_the_ast(seed):
    rng = random.Random(seed)
    files = SynthRepo(SynthConfig(entities=20, seed=seed % 7)).files()
    f = files[rng.randrange(len(files))]
    assert parse_source(reformat(f.text, rng), f.module) == parse_file(f)


@settings(max_examples=100, deadline=None)
@given(st.text(alphabet="def():\n =x1+\"#", max_size=30))
def test_arbitrary_text_parses_or_raises_parse_error(text):
    try:
        parse_source(text)
    except ParseError:
        pass
