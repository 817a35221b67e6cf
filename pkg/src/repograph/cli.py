"""Command-line interface.

Commands: build, update, query, resolve, train, generate, eval, bench.
Exit codes: 0 success, 1 domain error, 2 usage error. Results go to stdout,
diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import graph as kg
from .bench import SUITES, format_rows, gates_ok
from .builder import MalformedTrace, parse_trace
from .constraints import RuleSyntaxError, load_rules
from .decoder import DecodeConfig, DecodeContext, NoValidSequence, compiles, decode, load_table, reference_model, sequence_violations
from .maintenance import ChangeSet, FileChange, StaleSnapshot, Workspace, read_changeset
from .metrics import EvalRecord, MissingVerdicts, attach_verdicts, load_verdicts, lhr, shr
from .minipy import ParseError, SourceFile
from .policy import (
    DEFAULT_TEMPLATES, DegenerateBatch, GraphEnvironment, PolicyParams, RewardWeights, Task,
    TemplateError, TrainConfig, featurize, load_templates, sample_query, synthetic_pairs, train, warm_start,
)
from .query import QuerySyntaxError, UnknownMotif, execute, load_motifs, parse_query


class UsageError(Exception):
    pass


DOMAIN_ERRORS = (
    ParseError, NoValidSequence, StaleSnapshot, QuerySyntaxError, UnknownMotif, kg.FormatError,
    MalformedTrace, TemplateError, RuleSyntaxError, MissingVerdicts,
    # malformed manifests, tables and other input files
    ValueError,
)

PATH_KEYS = ("repo", "graph", "traces", "motifs", "rules", "templates", "tasks", "policy", "token_table")


@dataclass
class Config:
    repo: str = "."
    graph: str = "graph.kg"
    traces: str | None = None
    motifs: str | None = None
    rules: str | None = None
    templates: str | None = None
    tasks: str | None = None
    policy: str | None = None
    token_table: str | None = None
    # scope the generated code is placed in; defaults to the retrieved slot name
    scope: str | None = None
    reward: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    decode: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | None) -> Config:
        if path is None:
            return cls()
        p = Path(path)
        if not p.is_file():
            raise UsageError(f"config file not found: {path}")
        try:
            data = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise UsageError(f"config is not valid JSON: {e}") from None
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        cfg = cls(**data)
        for key in PATH_KEYS:
            v = getattr(cfg, key)
            if v is not None and not Path(v).is_absolute():
                setattr(cfg, key, str(p.parent / v))
        return cfg

    def require(self, *keys: str) -> None:
        """Referenced input paths must exist when a command starts."""
        for key in keys:
            v = getattr(self, key)
            if v is not None and not Path(v).exists():
                raise UsageError(f"{key} path does not exist: {v}")

    def reward_weights(self) -> RewardWeights:
        return RewardWeights(**self.reward)

    def train_config(self) -> TrainConfig:
        return TrainConfig(**self.train)

    def decode_config(self, k: int | None) -> DecodeConfig:
        d = dict(self.decode)
        if k is not None:
            d["k"] = k
        return DecodeConfig(**d)


# ---------------------------------------------------------------------------
# Workspace persistence
# ---------------------------------------------------------------------------

def sidecar(graph_path: str) -> Path:
    return Path(graph_path + ".ws.json")


def save_workspace(ws: Workspace, graph_path: str) -> None:
    ws.resolve_all()
    kg.save(ws.graph, graph_path)
    data = {
        "texts": ws.texts,
        "effective": ws.effective,
        "events": [e.to_json() for e in ws.events],
    }
    sidecar(graph_path).write_text(json.dumps(data, sort_keys=True), encoding="utf-8")


def load_workspace(graph_path: str) -> Workspace:
    """Rebuild the workspace from the sidecar written next to the graph."""
    sc = sidecar(graph_path)
    if not sc.is_file():
        raise UsageError(f"no workspace next to {graph_path}; run 'build' first")
    data = json.loads(sc.read_text(encoding="utf-8"))
    events = parse_trace(data["events"])
    effective = data["effective"]
    ws = Workspace.build([SourceFile(p, t) for p, t in effective.items()], events)
    # files whose current text does not parse keep their last good facts
    broken = tuple(FileChange(p, effective.get(p), t) for p, t in sorted(data["texts"].items())
                   if effective.get(p) != t)
    if broken:
        ws.apply(ChangeSet(broken), "eager")
    return ws


def read_repo(root: str) -> list[SourceFile]:
    base = Path(root)
    if not base.is_dir():
        raise UsageError(f"repository root is not a directory: {root}")
    return [SourceFile(p.relative_to(base).as_posix(), p.read_text(encoding="utf-8"))
            for p in sorted(base.rglob("*.py"))]


def read_tasks(path: str) -> list[Task]:
    tasks = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        instr, sep, gold = line.partition("\t")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected 'instruction<TAB>gold[,gold...]'")
        tasks.append(Task(instr.strip(), frozenset(g.strip() for g in gold.split(",") if g.strip())))
    return tasks


def _graph_path(cfg: Config, args: argparse.Namespace) -> str:
    return args.graph or cfg.graph


def _load_graph(path: str) -> kg.KnowledgeGraph:
    if not Path(path).is_file():
        raise UsageError(f"graph file not found: {path}; run 'build' first")
    return kg.load(path)


def _report_errors(ws: Workspace) -> int:
    for path in sorted(ws.errors):
        print(f"parse error: {ws.errors[path]}", file=sys.stderr)
    return 1 if ws.errors else 0


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_build(cfg: Config, args: argparse.Namespace) -> int:
    cfg.require("repo", "traces")
    files = read_repo(args.repo or cfg.repo)
    events = parse_trace(Path(cfg.traces).read_text(encoding="utf-8").splitlines()) if cfg.traces else []
    ws = Workspace.build(files, events)
    path = _graph_path(cfg, args)
    save_workspace(ws, path)
    print(f"nodes\t{len(ws.graph.nodes)}\nedges\t{len(ws.graph.edges)}")
    return _report_errors(ws)


def cmd_update(cfg: Config, args: argparse.Namespace) -> int:
    path = _graph_path(cfg, args)
    ws = load_workspace(path)
    if not Path(args.changeset).is_dir():
        raise UsageError(f"changeset directory not found: {args.changeset}")
    cs = read_changeset(args.changeset, ws)
    stats = ws.apply(cs, args.mode)
    save_workspace(ws, path)
    for k in ("nodes_visited", "edges_touched", "entities_reextracted", "pending_created",
              "pending_resolved", "direct", "transitive"):
        print(f"{k}\t{getattr(stats, k)}")
    return _report_errors(ws)


def cmd_resolve(cfg: Config, args: argparse.Namespace) -> int:
    path = _graph_path(cfg, args)
    ws = load_workspace(path)
    n = ws.resolve_all()
    save_workspace(ws, path)
    print(f"resolved\t{n}")
    return 0


def cmd_query(cfg: Config, args: argparse.Namespace) -> int:
    cfg.require("motifs")
    g = _load_graph(_graph_path(cfg, args))
    q = parse_query(args.query)
    motifs = load_motifs(cfg.motifs) if cfg.motifs else None
    res = execute(q, g, motifs=motifs)
    for nid in sorted(res.nodes, key=lambda i: g.nodes[i].name):
        n = g.nodes[nid]
        print(f"NODE\t{n.name}\t{n.kind}")
    if args.edges:
        for e in sorted(res.edge_names(g)):
            print("EDGE\t" + "\t".join(e))
    return 0


def _templates(cfg: Config):
    return load_templates(cfg.templates) if cfg.templates else list(DEFAULT_TEMPLATES)


def _params(cfg: Config, n_templates: int) -> PolicyParams:
    if cfg.policy and Path(cfg.policy).is_file():
        params = PolicyParams.load(cfg.policy)
        if params.theta.shape[0] != n_templates:
            raise UsageError(f"policy has {params.theta.shape[0]} templates, registry has {n_templates}")
        return params
    return PolicyParams.zeros(n_templates)


def cmd_train(cfg: Config, args: argparse.Namespace) -> int:
    cfg.require("templates", "tasks")
    if cfg.tasks is None or cfg.policy is None:
        raise UsageError("train needs 'tasks' and 'policy' in the config")
    g = _load_graph(_graph_path(cfg, args))
    templates = _templates(cfg)
    tasks = read_tasks(cfg.tasks)
    if not tasks:
        raise UsageError("task file is empty")
    tc = cfg.train_config()
    env = GraphEnvironment(g, templates, cfg.reward_weights())
    params = _params(cfg, len(templates))
    if args.warm:
        pairs = synthetic_pairs(g, templates, args.warm, args.seed)
        params = warm_start(params, [(featurize(t.instruction, g), y) for t, y in pairs], tc)
    last = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateBatch)
        steps = train(params, tasks, tc, env, args.seed, log=lambda i, s: last.update(stats=s))
    params.save(cfg.policy)
    print(f"steps\t{steps}")
    if last:
        print(f"mean_reward\t{last['stats'].mean_reward:.6g}\nentropy\t{last['stats'].entropy:.6g}")
    return 0


def _generate(cfg: Config, g: kg.KnowledgeGraph, instruction: str, seed: int, k: int | None):
    templates = _templates(cfg)
    params = _params(cfg, len(templates))
    s = sample_query(params, instruction, g, templates, seed)
    nodes = execute(s.query, g).nodes if s.query is not None else frozenset()
    scope = cfg.scope or _scope_of(s.query) or "main"
    rules = load_rules(cfg.rules) if cfg.rules else []
    dctx = DecodeContext.from_graph(g, scope, nodes, rules)
    model = reference_model(load_table(cfg.token_table))  # type: ignore[arg-type]
    return dctx, decode(instruction, dctx, model, cfg.decode_config(k))


def _scope_of(q) -> str | None:
    if q is None:
        return None
    for p in q.patterns:
        for n in p.nodes:
            for a, v in n.props:
                if a == "name":
                    return v
    return None


def cmd_generate(cfg: Config, args: argparse.Namespace) -> int:
    cfg.require("templates", "rules", "token_table")
    if cfg.token_table is None:
        raise UsageError("generate needs 'token_table' in the config")
    g = _load_graph(_graph_path(cfg, args))
    _, res = _generate(cfg, g, args.instruction, args.seed, args.k)
    sys.stdout.write(res.text)
    return 0


def cmd_eval(cfg: Config, args: argparse.Namespace) -> int:
    cfg.require("templates", "rules", "token_table", "tasks")
    if cfg.token_table is None or cfg.tasks is None:
        raise UsageError("eval needs 'token_table' and 'tasks' in the config")
    g = _load_graph(_graph_path(cfg, args))
    records = []
    for i, task in enumerate(read_tasks(cfg.tasks), 1):
        try:
            dctx, res = _generate(cfg, g, task.instruction, args.seed, args.k)
            bad = len(sequence_violations(res.tokens, dctx))
            records.append(EvalRecord(str(i), res.text, compiles(res.tokens, dctx), bad))
        except NoValidSequence:
            records.append(EvalRecord(str(i), None, False, 0))
    for r in records:
        print(f"TASK\t{r.task}\tcompile={int(r.compile)}\tviolations={r.violations}")
    print(f"shr\t{shr(records):.6g}")
    if args.verdicts:
        if not Path(args.verdicts).is_file():
            raise UsageError(f"verdict file not found: {args.verdicts}")
        print(f"lhr\t{lhr(attach_verdicts(records, load_verdicts(args.verdicts))):.6g}")
    return 0


def cmd_bench(cfg: Config, args: argparse.Namespace) -> int:
    rows = SUITES[args.suite]()
    sys.stdout.write(format_rows(rows))
    return 0 if gates_ok(rows) else 1


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--graph", help="graph file (overrides the config)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--mode", choices=("lazy", "eager"), default="lazy")
    common.add_argument("--k", type=int, help="beam width (overrides the config)")

    parser = argparse.ArgumentParser(prog="repograph", description="Repository knowledge graph tools.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("build", parents=[common], help="build the graph from a repository")
    p.add_argument("repo", nargs="?", help="repository root (overrides the config)")
    p.set_defaults(func=cmd_build)
    p = sub.add_parser("update", parents=[common], help="apply a changeset directory")
    p.add_argument("changeset")
    p.set_defaults(func=cmd_update)
    p = sub.add_parser("resolve", parents=[common], help="resolve all pending references")
    p.set_defaults(func=cmd_resolve)
    p = sub.add_parser("query", parents=[common], help="run a graph query")
    p.add_argument("query")
    p.add_argument("--edges", action="store_true", help="also print result edges")
    p.set_defaults(func=cmd_query)
    p = sub.add_parser("train", parents=[common], help="train the query policy")
    p.add_argument("--warm", type=int, default=0, help="synthetic warm-start pairs")
    p.set_defaults(func=cmd_train)
    p = sub.add_parser("generate", parents=[common], help="decode code for an instruction")
    p.add_argument("instruction")
    p.set_defaults(func=cmd_generate)
    p = sub.add_parser("eval", parents=[common], help="decode every task and report metrics")
    p.add_argument("--verdicts", help="external verdict file")
    p.set_defaults(func=cmd_eval)
    p = sub.add_parser("bench", parents=[common], help="run a benchmark suite")
    p.add_argument("suite", choices=sorted(SUITES))
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = Config.load(args.config)
        if args.k is not None and args.k < 1:
            raise UsageError("--k must be at least 1")
        np.random.seed(args.seed)
        return args.func(cfg, args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except DOMAIN_ERRORS as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    except TypeError as e:
        # bad keys inside the reward/train/decode config sections
        print(f"usage error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
