"""Convergence fixtures: small programs with polymorphic and higher-order calls.

The oracle graph is the static key set plus every call edge the evaluator
observes when running all tests. Static analysis alone misses the
higher-order edges; traces add them.
"""

from __future__ import annotations

import math
import random

from minipy_eval import run_tests

from repograph.builder import TraceEvent, coverage, extract_static
from repograph.entities import API, FUNC
from repograph.graph import CALLS, DYNAMIC, KnowledgeGraph, structural_hamming
from repograph.maintenance import Workspace
from repograph.minipy import SourceFile

COVERAGE_STEPS = (0.0, 0.25, 0.5, 0.75, 1.0)


def fixture(seed: int) -> list[SourceFile]:
    rng = random.Random(seed)
    k = rng.randint(2, 4)
    chain = rng.randint(1, 4)
    method = rng.choice(["area", "run", "size"])
    base = []
    for i in range(k):
        base += [f"class C{i}:", f"    def {method}(self) -> int:", f"        return {i + 1}", ""]
    ops = [
        "def dispatch(o) -> int:",
        f"    return o.{method}()",
        "",
        "def twice(fn, x: int) -> int:",
        "    return fn(x) + fn(x)",
        "",
        "def inc(x: int) -> int:",
        "    return x + 1",
        "",
        "def dec(x: int) -> int:",
        "    return x - 1",
        "",
    ]
    for i in range(chain):
        nxt = f"h{i + 1}(x)" if i + 1 < chain else "x"
        ops += [f"def h{i}(x: int) -> int:", f"    return {nxt}", ""]
    classes = ", ".join(f"C{i}" for i in range(k))
    tests = [f"from pkg.base import {classes}", "from pkg.ops import dispatch, twice, inc, dec, h0", ""]
    for i in range(k):
        tests += [f"def test_c{i}():", f"    return dispatch(C{i}())", ""]
    tests += ["def test_twice():", f"    return twice(inc, {rng.randint(1, 9)})", ""]
    tests += ["def test_dec():", f"    return twice(dec, {rng.randint(1, 9)})", ""]
    tests += ["def test_chain():", "    return h0(2)", ""]
    return [
        SourceFile("pkg/base.py", "\n".join(base)),
        SourceFile("pkg/ops.py", "\n".join(ops)),
        SourceFile("tests/test_pkg.py", "\n".join(tests)),
    ]


def oracle(files: list[SourceFile], events: list[TraceEvent]) -> KnowledgeGraph:
    g = extract_static(files).copy()
    for ev in events:
        s, d = (g.by_name[n] if n in g.by_name else g.upsert_node(n, API, provenance=DYNAMIC)
                for n in (ev.caller, ev.callee))
        if g.edge(s, CALLS, d) is None:
            g.upsert_edge(s, CALLS, d, DYNAMIC, count=1)
    return g


def events_at(files: list[SourceFile], events: list[TraceEvent], fraction: float) -> list[TraceEvent]:
    """Shortest trace prefix whose function coverage reaches ``fraction``."""
    static = extract_static(files)
    funcs = {static.nodes[i].name for i in static.nodes_of_kind(FUNC)}
    need = math.ceil(fraction * len(funcs))
    seen: set[str] = set()
    for i, e in enumerate(events):
        if len(seen) >= need:
            return events[:i]
        seen |= {e.caller, e.callee} & funcs
    return list(events)


def curve(seed: int) -> tuple[list[int], KnowledgeGraph, list[float]]:
    """Structural Hamming distance to the oracle at each coverage step, the final graph, and measured coverages."""
    files = fixture(seed)
    events = run_tests(files)
    g_star = oracle(files, events)
    dists, covs, g = [], [], None
    for f in COVERAGE_STEPS:
        sub = events_at(files, events, f)
        g = Workspace.build(files, sub).graph
        dists.append(structural_hamming(g, g_star))
        covs.append(coverage(g, sub).fraction)
    assert g is not None
    return dists, g, covs
