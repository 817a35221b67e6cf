from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import brute_sat, first_violation
from solver_cases import random_constraint, solver_context, solver_sequence

from repograph.constraints import (
    SAT, ArchRule, ArityEq, CallFact, ConstraintStore, PrefixCache, PrefixSummary, RequiredArg,
    RuleSyntaxError, SolverContext, StackMismatch, TVar, TypeSub, Visible, extract, parse_rules, solve,
    violations,
)
from repograph.entities import ParamSig, Signature
from repograph.lattice import TypeLattice

LOGIN = Signature((ParamSig("username", "str"), ParamSig("password", "str")), "bool")


def login_ctx() -> SolverContext:
    return SolverContext({"app.auth.authenticate_user": LOGIN},
                         TypeLattice({"app.C": ("app.D",), "app.D": ()}))


def test_one_argument_login_call_is_unsat():
    ctx = login_ctx()
    cs = extract(PrefixSummary("app.views", (CallFact("app.auth.authenticate_user", (TVar(0),)),)), ctx)
    assert ArityEq("app.auth.authenticate_user", 1, frozenset()) in cs
    st = solve(cs, ctx)
    assert not st.ok and st.violated == ArityEq("app.auth.authenticate_user", 1, frozenset())


def test_int_literal_into_int_param():
    ctx = SolverContext({"m.f": Signature((ParamSig("x", "int"),), "None")})
    assert TypeSub("int", "int") in extract(PrefixSummary("m", (CallFact("m.f", ("int",)),)), ctx)


def test_private_reference_emits_visible():
    assert extract(PrefixSummary("a", names=("b._secret",)), SolverContext()) == [Visible("b._secret", "a")]
    assert not solve([Visible("b._secret", "a")], SolverContext()).ok
    assert solve([Visible("b._secret", "b.f")], SolverContext()).ok
    assert solve([Visible("b.__init__", "a")], SolverContext()).ok


def test_empty_store_is_sat():
    assert ConstraintStore(SolverContext()).check() == SAT


def test_arity_against_declared_signature():
    ctx = login_ctx()
    f = "app.auth.authenticate_user"
    assert not solve([ArityEq(f, 1, frozenset())], ctx).ok
    assert solve([ArityEq(f, 1, frozenset({"password"}))], ctx).ok
    assert not solve([ArityEq(f, 3, frozenset())], ctx).ok
    assert not solve([RequiredArg(f, "password", 1, frozenset())], ctx).ok


def test_required_parameter_missing_despite_count():
    sig = Signature((ParamSig("a", "int"), ParamSig("b", "int"), ParamSig("c", "int", True)), "None")
    ctx = SolverContext({"m.f": sig})
    # two names are bound but b is not one of them
    assert not solve([ArityEq("m.f", 1, frozenset({"c"}))], ctx).ok


def test_lattice_direction():
    ctx = login_ctx()
    assert solve([TypeSub("app.C", "app.D")], ctx).ok
    assert not solve([TypeSub("app.D", "app.C")], ctx).ok


def test_variables_unify_and_bounds_meet():
    ctx = login_ctx()
    a, b = TVar(0), TVar(1)
    assert solve([TypeSub(a, "app.D"), TypeSub("app.C", a)], ctx).ok
    assert not solve([TypeSub(a, "int"), TypeSub(b, "str"), TypeSub(a, b)], ctx).ok
    assert not solve([TypeSub("app.D", a), TypeSub(a, "app.C")], ctx).ok


def test_pop_restores_sat():
    s = ConstraintStore(login_ctx())
    s.push([TypeSub("app.C", "app.D")])
    frame = s.push([TypeSub("app.D", "app.C")])
    assert not s.check().ok
    s.pop(frame)
    assert s.check().ok and s.depth == 1


def test_double_pop_raises():
    s = ConstraintStore(login_ctx())
    frame = s.push([])
    s.pop(frame)
    with pytest.raises(StackMismatch):
        s.pop(frame)


def test_unsat_is_sticky():
    s = ConstraintStore(login_ctx())
    s.push([TypeSub("int", "str")])
    s.push([TypeSub("int", "int")])
    assert not s.check().ok and s.check().violated == TypeSub("int", "str")


def test_batch_check_cases():
    ctx = login_ctx()
    s = ConstraintStore(ctx)
    s.push([TypeSub(TVar(0), "str")])
    assert s.batch_check([[]]) == [s.check()]
    f = "app.auth.authenticate_user"
    out = s.batch_check([[ArityEq(f, 2, frozenset())], [ArityEq(f, 1, frozenset())]])
    assert [x.ok for x in out] == [True, False]


def test_batch_check_equals_sequential_push_pop():
    ctx = solver_context()
    rng = random.Random(5)
    s = ConstraintStore(ctx)
    s.push([random_constraint(rng) for _ in range(2)])
    deltas = [[random_constraint(rng) for _ in range(rng.randint(0, 3))] for _ in range(50)]
    seq = []
    for d in deltas:
        frame = s.push(d)
        seq.append(s.check())
        s.pop(frame)
    assert s.batch_check(deltas) == seq


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_push_pop_sequences_match_brute_force(seed):
    faithful, sticky = solver_sequence(seed, solver_context())
    assert faithful and sticky


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_first_violation_matches_oracle(seed):
    rng = random.Random(seed)
    ctx = solver_context()
    cs = [random_constraint(rng) for _ in range(rng.randint(0, 6))]
    st_ = solve(cs, ctx)
    assert st_.ok == brute_sat(cs, ctx)
    assert st_.violated == first_violation(cs, ctx)


def test_budget_defers_until_finalize():
    ctx = login_ctx()
    s = ConstraintStore(ctx, budget=0)
    s.push([TypeSub("int", "int"), TypeSub("int", "int"), TypeSub("int", "str")])
    assert s.check().ok and s.check().pending
    assert not s.finalize().ok
    # finalize works on a copy
    assert s.check().pending


def test_freeze_thaw_and_copy_are_independent():
    ctx = login_ctx()
    s = ConstraintStore(ctx)
    s.push([TypeSub(TVar(0), "app.D")])
    state = s.freeze()
    t = ConstraintStore.thaw(state, ctx)
    t.push([TypeSub(TVar(0), "int")])
    assert not t.check().ok and s.check().ok
    c = s.copy()
    c.push([TypeSub("int", "str")])
    assert s.check().ok


def test_violations_lists_each_conflict():
    ctx = login_ctx()
    cs = [TypeSub("int", "str"), TypeSub("int", "int"), TypeSub("app.D", "app.C")]
    assert violations(cs, ctx) == [cs[0], cs[2]]


def test_prefix_cache():
    cache = PrefixCache()
    s = ConstraintStore(SolverContext())
    assert cache.get(("a",)) is None
    cache.put(("a", "b"), s.freeze())
    assert cache.get(("a",)) is None
    assert cache.get(("a", "b")) == s.freeze()
    assert (cache.hits, cache.misses) == (1, 2)


def test_arch_rules():
    rules = parse_rules("# layering\nFORBID app.ui.* CALLS app.db.*\n\n")
    assert rules == [ArchRule("app.ui.*", "CALLS", "app.db.*")]
    ctx = SolverContext(rules=rules)
    bad = extract(PrefixSummary("app.ui.v", relations=(("app.ui.v", "CALLS", "app.db.q"),)), ctx)
    ok = extract(PrefixSummary("app.ui.v", relations=(("app.ui.v", "IMPORTS", "app.db.q"),)), ctx)
    assert not solve(bad, ctx).ok and ok == []
    with pytest.raises(RuleSyntaxError):
        parse_rules("ALLOW a CALLS b")
