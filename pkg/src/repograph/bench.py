"""Benchmark suites: incremental equivalence, update scaling, decoding and planning.

Each suite returns :class:`Row` records with a gate; ``format_rows`` renders
them as a tab-separated table.
"""

from __future__ import annotations

import random
import statistics
import time
import warnings
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from .constraints import ArchRule, SolverContext, solve
from .decoder import (
    END, DecodeConfig, DecodeContext, NoValidSequence, ReferenceModel, Token, analyze,
    compiles, decode, is_legal, rank_key, render, sequence_violations, tok,
)
from .entities import ParamSig, Signature
from .graph import canonicalize
from .lattice import TypeLattice
from .maintenance import Workspace, full_rebuild
from .metrics import EvalRecord, shr
from .policy import (
    DegenerateBatch, Environment, PolicyParams, Task, TrainConfig, featurize, train, train_step,
)
from .synth import SynthConfig, SynthRepo


@dataclass(frozen=True)
class Row:
    suite: str
    case: str
    metric: str
    value: float
    gate: str = ""
    ok: bool | None = None


def format_rows(rows: Iterable[Row]) -> str:
    out = ["suite\tcase\tmetric\tvalue\tgate\tpass"]
    for r in rows:
        v = f"{r.value:.6g}" if isinstance(r.value, float) else str(r.value)
        ok = "" if r.ok is None else ("PASS" if r.ok else "FAIL")
        out.append(f"{r.suite}\t{r.case}\t{r.metric}\t{v}\t{r.gate}\t{ok}")
    return "\n".join(out) + "\n"


def gates_ok(rows: Iterable[Row]) -> bool:
    return all(r.ok is not False for r in rows)


# ---------------------------------------------------------------------------
# Maintenance
# ---------------------------------------------------------------------------

def equivalence_case(seed: int, entities: tuple[int, int] = (50, 500),
                     commits: tuple[int, int] = (5, 50)) -> bool:
    """Random commits in mixed lazy/eager mode, then resolve_all, against a full rebuild."""
    rng = random.Random(seed)
    repo = SynthRepo(SynthConfig(entities=rng.randint(*entities), seed=seed))
    ws = Workspace.build(repo.files())
    for _ in range(rng.randint(*commits)):
        ws.apply(repo.random_commit(), "lazy" if rng.random() < 0.5 else "eager")
    ws.resolve_all()
    return canonicalize(ws.graph) == canonicalize(full_rebuild(ws.snapshot(), ws.events))


def equivalence_suite(n: int = 100, seed: int = 0) -> list[Row]:
    t = time.perf_counter()
    equal = sum(equivalence_case(seed + i) for i in range(n))
    elapsed = time.perf_counter() - t
    return [
        Row("equivalence", f"n={n}", "equal_fraction", equal / n, "== 1", equal == n),
        Row("equivalence", f"n={n}", "seconds", elapsed, "< 120", elapsed < 120),
    ]


def visited_mean(entities: int, delta: int = 10, commits: int = 20, seed: int = 7) -> float:
    repo = SynthRepo(SynthConfig(entities=entities, seed=seed))
    ws = Workspace.build(repo.files())
    visited = [ws.apply(repo.local_commit(delta), "lazy").nodes_visited for _ in range(commits)]
    return statistics.mean(visited)


def scaling_suite(sizes: Sequence[int] = (1000, 10000), delta: int = 10, commits: int = 20,
                  seed: int = 7) -> list[Row]:
    t = time.perf_counter()
    means = [visited_mean(n, delta, commits, seed) for n in sizes]
    elapsed = time.perf_counter() - t
    rows = [Row("scaling", f"n={n}", "visited_mean", m) for n, m in zip(sizes, means)]
    growth = means[-1] / means[0]
    rows.append(Row("scaling", f"{sizes[0]}->{sizes[-1]}", "visited_growth", growth, "<= 1.5", growth <= 1.5))
    rows.append(Row("scaling", "all", "seconds", elapsed, "< 60", elapsed < 60))
    return rows


# ---------------------------------------------------------------------------
# Decoding
# ---------------------------------------------------------------------------

SCOPE = "app.core.run"
_POOL = ("NAME(f)", "NAME(g)", "NAME(C)", "NAME(x)", "NAME(_p)", "LIT(int)", "LIT(str)",
         "KW(a)", "ARG_SEP", "ASSIGN", "RETURN", "DOT")
_CORE = ("END", "NEWLINE", "CALL_OPEN", "CALL_CLOSE")
_TYPES = ("int", "str", "Any", "app.C", "app.D")


@dataclass
class DecoderCase:
    dctx: DecodeContext
    model: ReferenceModel
    vocab: tuple[Token, ...]
    cfg: DecodeConfig


def _random_sig(rng: random.Random, returns: str | None = None) -> Signature:
    params = []
    for name in rng.sample(["a", "b"], rng.randint(0, 2)):
        params.append(ParamSig(name, rng.choice(_TYPES), rng.random() < 0.3))
    return Signature(tuple(params), returns or rng.choice(_TYPES))


def decoder_case(seed: int, vocab_size: int = 8, max_len: int = 6) -> DecoderCase:
    """A small random context, vocabulary and order-1 token table."""
    rng = random.Random(seed)
    sigs = {
        "app.core.f": _random_sig(rng),
        "app.g": _random_sig(rng),
        "app.C": _random_sig(rng, "app.C"),
        SCOPE: _random_sig(rng),
    }
    kinds = {"app.core.f": "FUNC", "app.g": "FUNC", "app.C": "CLASS", "app.D": "CLASS", SCOPE: "FUNC"}
    rules = []
    if rng.random() < 0.3:
        rules.append(ArchRule("app.core.*", "CALLS", "app.g"))
    if rng.random() < 0.2:
        rules.append(ArchRule("app.core.*", "IMPORTS", "app.C"))
    solver = SolverContext(sigs, TypeLattice({"app.C": ("app.D",), "app.D": ()}), rules)
    dctx = DecodeContext(solver, kinds, SCOPE)
    vocab = tuple(tok(t) for t in _CORE + tuple(rng.sample(_POOL, vocab_size - len(_CORE))))
    table: dict[tuple[Token, ...], list[tuple[Token, float]]] = {}
    for ctx in [()] + [(t,) for t in vocab]:
        row = rng.sample(vocab, rng.randint(1, len(vocab)))
        table[ctx] = [(t, rng.uniform(-3.0, 0.0)) for t in row]
    k = rng.choice((1, 2, 3, 5))
    return DecoderCase(dctx, ReferenceModel(table, vocab), vocab, DecodeConfig(k=k, max_len=max_len))


@dataclass
class Enumeration:
    """Every legal, positive-probability sequence up to the length bound."""

    # (score, tokens, prefix constraints satisfiable) per prefix length
    prefixes: dict[int, list[tuple[float, tuple[Token, ...], bool]]]
    # complete sequences (ending in END) whose full constraint set is satisfiable
    valid: list[tuple[float, tuple[Token, ...]]]


def enumerate_sequences(case: DecoderCase) -> Enumeration:
    prefixes: dict[int, list[tuple[float, tuple[Token, ...], bool]]] = {}
    valid: list[tuple[float, tuple[Token, ...]]] = []

    def walk(seq: tuple[Token, ...], score: float) -> None:
        if len(seq) == case.cfg.max_len:
            return
        a, _ = analyze(seq, case.dctx)
        for t, lp in case.model.next_candidates(seq):
            if not is_legal(a, t):
                continue
            ext = seq + (t,)
            s = score + lp
            _, cs = analyze(ext, case.dctx)
            sat = solve(cs, case.dctx.solver).ok
            prefixes.setdefault(len(ext), []).append((s, ext, sat))
            if t.kind == END:
                if sat:
                    valid.append((s, ext))
            else:
                walk(ext, s)

    walk((), 0.0)
    return Enumeration(prefixes, valid)


def best_valid(en: Enumeration) -> tuple[float, tuple[Token, ...]] | None:
    if not en.valid:
        return None
    return min(en.valid, key=lambda x: rank_key(*x))


def within_top_k(en: Enumeration, target: tuple[Token, ...], k: int) -> bool:
    """Each prefix of ``target`` ranks among the k best satisfiable prefixes of its length."""
    for n in range(1, len(target) + 1):
        pool = sorted((rank_key(s, seq), seq) for s, seq, sat in en.prefixes[n] if sat)
        if target[:n] not in [seq for _, seq in pool[:k]]:
            return False
    return True


@dataclass
class DecoderOutcome:
    decoded: tuple[Token, ...] | None
    violations: int
    eligible: bool
    optimal: bool


def decoder_outcome(case: DecoderCase) -> DecoderOutcome:
    try:
        out: tuple[Token, ...] | None = decode("", case.dctx, case.model, case.cfg).tokens
    except NoValidSequence:
        out = None
    bad = len(sequence_violations(out, case.dctx)) if out is not None else 0
    en = enumerate_sequences(case)
    best = best_valid(en)
    eligible = best is not None and within_top_k(en, best[1], case.cfg.k)
    optimal = eligible and out == best[1]  # type: ignore[index]
    return DecoderOutcome(out, bad, eligible, optimal)


def decoder_suite(n: int = 200, seed: int = 0) -> list[Row]:
    t = time.perf_counter()
    outcomes = [decoder_outcome(decoder_case(seed + i)) for i in range(n)]
    records = [EvalRecord(str(i), None if o.decoded is None else render(o.decoded),
                          o.decoded is not None and compiles(o.decoded), o.violations)
               for i, o in enumerate(outcomes)]
    violations = sum(o.violations for o in outcomes)
    eligible = [o for o in outcomes if o.eligible]
    optimal = sum(o.optimal for o in eligible)
    elapsed = time.perf_counter() - t
    return [
        Row("decoder", f"n={n}", "decoded", float(sum(o.decoded is not None for o in outcomes))),
        Row("decoder", f"n={n}", "violations", float(violations), "== 0", violations == 0),
        Row("decoder", f"n={n}", "shr", shr(records), "== 0", shr(records) == 0.0),
        Row("decoder", f"n={n}", "eligible", float(len(eligible))),
        Row("decoder", f"n={n}", "optimal_fraction", optimal / len(eligible) if eligible else 1.0,
            "== 1", optimal == len(eligible)),
        Row("decoder", f"n={n}", "seconds", elapsed),
    ]


# ---------------------------------------------------------------------------
# Planning
# ---------------------------------------------------------------------------

class Bandit(Environment):
    """Contextual bandit over templates: one template pays 1 more than the rest.

    Each instruction adds its own reward offset, which a batch-mean baseline
    cannot remove but an instruction-dependent critic can.
    """

    def __init__(self, n_templates: int, n_instructions: int = 4, offset: float = 1.5, best: int = 0):
        self.n_templates = n_templates
        self.best = best
        self.instructions = [f"update the handler for request kind {i} in module service"
                             for i in range(n_instructions)]
        self.offsets = {u: i * offset for i, u in enumerate(self.instructions)}
        self._x = {u: featurize(u) for u in self.instructions}

    @property
    def tasks(self) -> list[Task]:
        return [Task(u) for u in self.instructions]

    def features(self, task: Task) -> np.ndarray:
        return self._x[task.instruction]

    def matrix(self) -> np.ndarray:
        return np.stack([self._x[u] for u in self.instructions])

    def reward(self, task: Task, template: int) -> float:
        return self.offsets[task.instruction] + (1.0 if template == self.best else 0.0)


def steps_to_converge(n_templates: int, seed: int, threshold: float = 0.95,
                      cfg: TrainConfig = TrainConfig()) -> tuple[int, float]:
    """Training steps until every instruction picks the paying template with p >= threshold."""
    env = Bandit(n_templates)
    params = PolicyParams.zeros(n_templates)
    x = env.matrix()

    def done(p: PolicyParams) -> bool:
        return bool(p.probs(x)[:, env.best].min() >= threshold)

    steps = train(params, env.tasks, cfg, env, seed, until=done)
    return steps, float(params.probs(x)[:, env.best].min())


def gradient_norm_variance(critic_steps: int = 20_000, batches: int = 500, seed: int = 0) -> tuple[float, float]:
    """Gradient-norm variance at the uniform policy with a trained critic and with a zero baseline."""
    env = Bandit(2)
    params = PolicyParams.zeros(2)
    train(params, env.tasks, TrainConfig(max_steps=critic_steps), env, seed, update_policy=False)

    def variance(critic: bool) -> float:
        cfg = TrainConfig(critic=critic)
        rng = np.random.default_rng(seed + 1)
        norms = []
        for _ in range(batches):
            p = params.copy()
            idx = rng.integers(0, len(env.tasks), cfg.batch)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DegenerateBatch)
                st = train_step(p, [env.tasks[i] for i in idx], cfg, env, rng, update_policy=False)
            norms.append(st.grad_norm)
        return float(np.var(norms))

    return variance(True), variance(False)


def planner_suite(seeds: Sequence[int] = (1, 2, 3), sizes: Sequence[int] = (2, 8)) -> list[Row]:
    t = time.perf_counter()
    rows = []
    for n in sizes:
        for s in seeds:
            steps, p = steps_to_converge(n, s)
            ok = p >= 0.95 and steps <= 10_000
            rows.append(Row("planner", f"templates={n} seed={s}", "steps_to_p95", float(steps), "<= 10000", ok))
    with_critic, zero = gradient_norm_variance()
    rows.append(Row("planner", "templates=2", "grad_norm_var_critic", with_critic))
    rows.append(Row("planner", "templates=2", "grad_norm_var_zero", zero, "> critic", with_critic < zero))
    elapsed = time.perf_counter() - t
    rows.append(Row("planner", "all", "seconds", elapsed, "< 180", elapsed < 180))
    return rows


SUITES: dict[str, Callable[[], list[Row]]] = {
    "equivalence": equivalence_suite,
    "scaling": scaling_suite,
    "decoder": decoder_suite,
    "planner": planner_suite,
}
