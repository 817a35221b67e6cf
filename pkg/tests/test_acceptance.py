"""Acceptance criteria, one test per criterion.

Each test records a one-line PASS/FAIL summary that conftest prints at the
end of the run.
"""

from __future__ import annotations

import random
import time
import warnings

from convergence import COVERAGE_STEPS, curve
from oracles import brute_match, brute_sat, enumerate_decodes
from solver_cases import solver_context, solver_sequence

from repograph import bench
from repograph.decoder import NoValidSequence, analyze, decode, rank_key, render
from repograph.entities import KINDS, semantic_diff
from repograph.graph import RELS, KnowledgeGraph, canonicalize
from repograph.maintenance import ChangeSet, FileChange, Workspace
from repograph.metrics import EvalRecord, shr
from repograph.minipy import SourceFile, parse_file
from repograph.query import execute, optimize, parse_query
from repograph.synth import SynthConfig, SynthRepo, random_query, reformat

RESULTS: list[str] = []


def report(n: int, title: str, ok: bool, detail: str) -> None:
    RESULTS.append(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
    assert ok, detail


# 1 -------------------------------------------------------------------------

def test_incremental_equivalence():
    t = time.perf_counter()
    n = 100
    equal = sum(bench.equivalence_case(seed) for seed in range(n))
    elapsed = time.perf_counter() - t
    report(1, "incremental equivalence", equal == n and elapsed < 120,
           f"{equal}/{n} sequences equal to a full rebuild in {elapsed:.1f}s (gate 100%, < 120s)")


# 2 -------------------------------------------------------------------------

def test_update_locality():
    t = time.perf_counter()
    small = bench.visited_mean(1000)
    large = bench.visited_mean(10000)
    elapsed = time.perf_counter() - t
    growth = large / small
    report(2, "update locality", growth <= 1.5 and elapsed < 60,
           f"visited {small:.1f} -> {large:.1f}, growth {growth:.3f} in {elapsed:.1f}s (gate <= 1.5, < 60s)")


# 3 -------------------------------------------------------------------------

def test_lazy_transparency():
    pairs = equal = nonempty = 0
    for seed in range(25):
        rng = random.Random(seed)
        repo = SynthRepo(SynthConfig(entities=rng.randint(50, 200), seed=seed))
        lazy, eager = Workspace.build(repo.files()), Workspace.build(repo.files())
        for _ in range(20):
            cs = repo.random_commit()
            lazy.apply(cs, "lazy")
            eager.apply(cs, "eager")
            q = parse_query(random_query(rng, sorted(eager.graph.by_name)))
            a = execute(q, lazy.graph, lazy.touch)
            b = execute(q, eager.graph)
            pairs += 1
            nonempty += bool(b.nodes)
            equal += (a.names(lazy.graph) == b.names(eager.graph)
                      and a.edge_names(lazy.graph) == b.edge_names(eager.graph))
    report(3, "lazy transparency", equal == pairs == 500,
           f"{equal}/{pairs} (commit, query) pairs equal, {nonempty} with nonempty results (gate 100%)")


# 4 -------------------------------------------------------------------------

def test_convergence():
    bad = []
    curves = []
    for seed in range(10):
        dists, g, covs = curve(seed)
        curves.append(dists)
        monotone = all(a >= b for a, b in zip(dists, dists[1:]))
        resolved = not any(e.candidate for e in g.edges.values())
        if not (monotone and dists[-1] == 0 and resolved and covs[-1] == 1.0):
            bad.append(seed)
    report(4, "convergence", not bad,
           f"{10 - len(bad)}/10 fixtures non-increasing over {[int(c * 100) for c in COVERAGE_STEPS]}% "
           f"coverage with distance 0 at 100%; first curves {curves[:3]}")


# 5, 6 ----------------------------------------------------------------------

def _decoder_corpus():
    out = []
    for seed in range(200):
        case = bench.decoder_case(seed)
        assert len(case.vocab) <= 8 and case.cfg.max_len <= 6
        try:
            got = decode("", case.dctx, case.model, case.cfg).tokens
        except NoValidSequence:
            got = None
        out.append((case, got))
    return out


_CORPUS: list = []


def corpus():
    if not _CORPUS:
        _CORPUS.extend(_decoder_corpus())
    return _CORPUS


def test_decoder_soundness():
    violating = 0
    records = []
    for i, (case, got) in enumerate(corpus()):
        if got is None:
            records.append(EvalRecord(str(i), None, False, 0))
            continue
        bad = not brute_sat(analyze(got, case.dctx)[1], case.dctx.solver)
        violating += bad
        records.append(EvalRecord(str(i), render(got), True, int(bad)))
    decoded = sum(got is not None for _, got in corpus())
    rate = shr(records)
    report(5, "decoder soundness", violating == 0 and rate == 0.0,
           f"{decoded}/200 decoded, {violating} violating sequences, shr {rate} (gate 0, 0.0)")


def test_decoder_conditional_optimality():
    eligible = optimal = 0
    for case, got in corpus():
        prefixes, valid = enumerate_decodes(case)
        if not valid:
            continue
        best = min(valid, key=lambda x: rank_key(*x))[1]
        ok = True
        for n in range(1, len(best) + 1):
            pool = sorted((rank_key(s, seq), seq) for s, seq, sat in prefixes[n] if sat)
            if best[:n] not in [seq for _, seq in pool[:case.cfg.k]]:
                ok = False
                break
        if ok:
            eligible += 1
            optimal += got == best
    report(6, "decoder conditional optimality", eligible > 0 and optimal == eligible,
           f"{optimal}/{eligible} certified cases return the brute-force optimum (gate 100%)")


# 7 -------------------------------------------------------------------------

def test_solver_fidelity():
    ctx = solver_context()
    faithful = sticky = 0
    for seed in range(1000):
        f, s = solver_sequence(seed, ctx)
        faithful += f
        sticky += s
    report(7, "incremental solver fidelity", faithful == sticky == 1000,
           f"{faithful}/1000 sequences match from-scratch solving, {sticky}/1000 keep UNSAT sticky (gate 100%)")


# 8 -------------------------------------------------------------------------

def test_reinforce_convergence():
    t = time.perf_counter()
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for n in (2, 8):
            for seed in (1, 2, 3):
                steps, p = bench.steps_to_converge(n, seed)
                rows.append((n, seed, steps, p))
        critic, zero = bench.gradient_norm_variance()
    elapsed = time.perf_counter() - t
    converged = all(p >= 0.95 and steps <= 10_000 for _, _, steps, p in rows)
    steps = ", ".join(f"{n}t/s{s}:{st}" for n, s, st, _ in rows)
    report(8, "REINFORCE convergence", converged and critic < zero and elapsed < 180,
           f"steps to p>=0.95 [{steps}]; grad-norm variance critic {critic:.4g} vs zero baseline {zero:.4g}; "
           f"{elapsed:.1f}s (gate <= 10000 steps, critic < zero, < 180s)")


# 9 -------------------------------------------------------------------------

def random_graph(rng: random.Random) -> KnowledgeGraph:
    g = KnowledgeGraph()
    n = rng.randint(3, 15)
    for i in range(n):
        name = f"m{i % 3}.{'_' if rng.random() < 0.2 else ''}n{i}"
        g.upsert_node(name, rng.choice(KINDS))
    ids = sorted(g.nodes)
    for _ in range(rng.randint(0, 2 * n)):
        g.upsert_edge(rng.choice(ids), rng.choice(RELS), rng.choice(ids))
    return g


def test_query_oracle():
    matched = preserved = nonempty = 0
    for seed in range(1000):
        rng = random.Random(seed)
        g = random_graph(rng)
        q = parse_query(random_query(rng, sorted(g.by_name)))
        want = brute_match(q, g)
        got = execute(q, g)
        opt = execute(optimize(q), g)
        matched += (got.nodes, got.edges) == want
        preserved += (opt.nodes, opt.edges) == (got.nodes, got.edges)
        nonempty += bool(want[0])
    report(9, "query oracle equivalence", matched == preserved == 1000,
           f"{matched}/1000 match the exhaustive matcher, {preserved}/1000 preserved by optimize, "
           f"{nonempty} nonempty (gate 100%)")


# 10 ------------------------------------------------------------------------

def test_diff_robustness():
    clean = noop = total = 0
    for seed in range(20):
        repo = SynthRepo(SynthConfig(entities=60, seed=seed))
        files = repo.files()
        ws = Workspace.build(files)
        rng = random.Random(seed)
        for _ in range(50):
            f = files[rng.randrange(len(files))]
            old = ws.texts[f.path]
            new = reformat(old, rng)
            total += 1
            clean += not semantic_diff(parse_file(SourceFile(f.path, old)), parse_file(SourceFile(f.path, new)))
            before = canonicalize(ws.graph)
            stats = ws.apply(ChangeSet((FileChange(f.path, old, new),)), "lazy")
            noop += (stats.direct == 0 and stats.transitive == 0 and stats.pending_created == 0
                     and canonicalize(ws.graph) == before)
    report(10, "diff robustness", clean == noop == total == 1000,
           f"{clean}/{total} mutations give an empty delta, {noop}/{total} updates are no-ops (gate 100%)")
