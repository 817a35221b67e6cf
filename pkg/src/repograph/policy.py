"""Query-selection policy trained with REINFORCE and a learned baseline.

Instructions are featurized by feature hashing. The policy is a softmax over
a finite set of query templates, each with one ``{NAME}`` slot filled by the
graph name that best overlaps the instruction. A linear critic estimates the
expected reward of an instruction and serves as the baseline.
"""

from __future__ import annotations

import hashlib
import math
import re
import warnings
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import CALLS, DEFINES, FILE, FUNC, KnowledgeGraph
from .query import Query, ResultSubgraph, execute, parse_query

DIM = 256
SLOT = "{NAME}"
_WORD = re.compile(r"[A-Za-z0-9]+")


class DegenerateBatch(UserWarning):
    """Batch rewards had (near) zero spread; advantages were all zero."""


class TemplateError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Features and templates
# ---------------------------------------------------------------------------

def _bucket(key: str, dim: int) -> int:
    h = hashlib.blake2b(key.encode(), digest_size=8).digest()
    # bucket 0 is reserved for the bias feature
    return 1 + int.from_bytes(h, "little") % (dim - 1)


def words(text: str) -> list[str]:
    return [w.lower() for w in _WORD.findall(text)]


def featurize(text: str, g: KnowledgeGraph | None = None, dim: int = DIM) -> np.ndarray:
    """Hashed unigram and bigram counts, a bias, and mentioned-name indicators."""
    x = np.zeros(dim)
    x[0] = 1.0
    ws = words(text)
    for w in ws:
        x[_bucket("w:" + w, dim)] += 1.0
    for a, b in zip(ws, ws[1:]):
        x[_bucket(f"b:{a} {b}", dim)] += 1.0
    if g is not None:
        for token in text.split():
            token = token.strip(".,;:()'\"")
            if token in g.by_name:
                x[_bucket("n:" + token, dim)] = 1.0
    return x


@dataclass(frozen=True)
class QueryTemplate:
    id: str
    text: str

    def __post_init__(self) -> None:
        if self.text.count(SLOT) != 1:
            raise TemplateError(f"template {self.id} must contain exactly one {SLOT} slot")
        try:
            parse_query(self.instantiate("probe"))
        except ValueError as e:
            raise TemplateError(f"template {self.id} does not parse: {e}") from e

    def instantiate(self, name: str) -> str:
        return self.text.replace(SLOT, name)

    @property
    def depth(self) -> int:
        return parse_query(self.instantiate("probe")).hop_depth()


DEFAULT_TEMPLATES = (
    QueryTemplate("T0", 'MATCH (f {name="{NAME}"}) RETURN f'),
    QueryTemplate("T1", 'MATCH (f {name="{NAME}"})-[:CALLS]->(g) RETURN f, g'),
    QueryTemplate("T2", 'MATCH (c)-[:CALLS]->(f {name="{NAME}"}) RETURN f, c'),
    QueryTemplate("T3", 'MATCH (m:FILE)-[:DEFINES]->(f {name="{NAME}"}) RETURN m, f'),
    QueryTemplate("T4", 'MATCH (f {name="{NAME}"})-[:CALLS*1..2]->(g) RETURN f, g'),
    QueryTemplate("T5", 'MATCH (f {name="{NAME}"})-[:RETURNS]->(t) RETURN f, t'),
    QueryTemplate("T6", 'MATCH (f {name="{NAME}"})-[:MUTATES]->(v) RETURN f, v'),
    QueryTemplate("T7", 'MATCH (m:FILE)-[:DEFINES]->(f {name="{NAME}"})-[:CALLS]->(g) RETURN m, f, g'),
)


def parse_templates(text: str) -> list[QueryTemplate]:
    """Registry lines ``T<id><TAB><query text with {NAME}>``."""
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        tid, sep, body = line.partition("\t")
        if not sep or not re.fullmatch(r"T\w+", tid):
            raise TemplateError(f"line {lineno}: expected 'T<id><TAB><query>'")
        out.append(QueryTemplate(tid, body.strip()))
    if len({t.id for t in out}) != len(out):
        raise TemplateError("duplicate template id")
    return out


def format_templates(templates: Iterable[QueryTemplate]) -> str:
    return "".join(f"{t.id}\t{t.text}\n" for t in templates)


def load_templates(path: str | Path) -> list[QueryTemplate]:
    return parse_templates(Path(path).read_text())


def slot_filler(instruction: str, g: KnowledgeGraph) -> str | None:
    """Graph name sharing the most words with the instruction.

    Ties prefer the shorter name, then the lexicographically smaller one.
    """
    want = set(words(instruction))
    best: tuple[int, int, str] | None = None
    for name in g.by_name:
        score = len(want & set(words(name.replace("_", " "))))
        key = (-score, len(name), name)
        if best is None or key < best:
            best = key
    return None if best is None or best[0] == 0 else best[2]


# ---------------------------------------------------------------------------
# Parameters and optimizer
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RewardWeights:
    test: float = 1.0
    type: float = 0.3
    size: float = 0.001

    def __post_init__(self) -> None:
        if min(self.test, self.type, self.size) < 0:
            raise ValueError("reward weights must be nonnegative")


@dataclass(frozen=True)
class TrainConfig:
    lr_policy: float = 5e-5
    lr_baseline: float = 1e-4
    batch: int = 32
    gamma: float = 0.95
    entropy: float = 0.01
    clip: float = 1.0
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    max_steps: int = 10_000
    # False replaces the critic by a zero baseline
    critic: bool = True
    warm_lr: float = 1e-2
    warm_epochs: int = 200

    def __post_init__(self) -> None:
        for k in ("lr_policy", "lr_baseline", "batch", "gamma", "clip", "eps", "max_steps"):
            if getattr(self, k) <= 0:
                raise ValueError(f"{k} must be positive")
        if self.entropy < 0:
            raise ValueError("entropy weight must be nonnegative")


class Adam:
    def __init__(self, shape: tuple[int, ...], lr: float, betas: tuple[float, float], eps: float):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps

    def step(self, grad: np.ndarray) -> np.ndarray:
        """Update for a descent direction ``grad``; returns the parameter delta."""
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        mhat = self.m / (1 - self.b1 ** self.t)
        vhat = self.v / (1 - self.b2 ** self.t)
        return -self.lr * mhat / (np.sqrt(vhat) + self.eps)


@dataclass
class PolicyParams:
    theta: np.ndarray
    psi: np.ndarray
    bias: float = 0.0
    opt_theta: Adam | None = field(default=None, repr=False)
    opt_psi: Adam | None = field(default=None, repr=False)

    @classmethod
    def zeros(cls, n_templates: int, dim: int = DIM) -> PolicyParams:
        if n_templates < 1:
            raise ValueError("at least one template is required")
        return cls(np.zeros((n_templates, dim)), np.zeros(dim))

    def copy(self) -> PolicyParams:
        return PolicyParams(self.theta.copy(), self.psi.copy(), self.bias)

    def probs(self, x: np.ndarray) -> np.ndarray:
        """Template distribution(s) for feature row(s) ``x``."""
        z = x @ self.theta.T
        z = z - z.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)

    def baseline(self, x: np.ndarray) -> np.ndarray:
        return x @ self.psi + self.bias

    def save(self, path: str | Path) -> None:
        # a file handle keeps numpy from appending its own suffix
        with open(path, "wb") as f:
            np.savez(f, theta=self.theta, psi=self.psi, bias=np.array([self.bias]))

    @classmethod
    def load(cls, path: str | Path) -> PolicyParams:
        with np.load(path) as d:
            return cls(d["theta"], d["psi"], float(d["bias"][0]))


def entropy(p: np.ndarray) -> np.ndarray:
    return -(p * np.log(np.clip(p, 1e-300, None))).sum(axis=-1)


# ---------------------------------------------------------------------------
# Sampling and reward
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Sample:
    template: int
    query: Query | None
    logp: float
    entropy: float


def sample_query(params: PolicyParams, instruction: str, g: KnowledgeGraph,
                 templates: Sequence[QueryTemplate], seed: int) -> Sample:
    """Draw a template for an instruction and instantiate it on ``g``.

    The query is None when no graph name overlaps the instruction.
    """
    x = featurize(instruction, g, params.theta.shape[1])
    p = params.probs(x)
    rng = np.random.default_rng(seed)
    i = int(rng.choice(len(p), p=p))
    name = slot_filler(instruction, g)
    q = None if name is None else parse_query(templates[i].instantiate(name))
    return Sample(i, q, float(np.log(p[i])), float(entropy(p)))


def reward(result: ResultSubgraph, gold: Iterable[str] | None, r_test: float, r_type: float,
           w: RewardWeights = RewardWeights()) -> float:
    """``w.test * r_test + w.type * r_type - w.size * |result|``."""
    del gold  # oracle-supplied r_test already reflects gold coverage
    return w.test * r_test + w.type * r_type - w.size * result.size


@dataclass(frozen=True)
class Task:
    instruction: str
    gold: frozenset[str] = frozenset()
    # r_type from the task oracle
    r_type: float = 1.0


class Environment:
    """Rewards of templates on instructions; subclasses define the task oracle."""

    dim = DIM

    def features(self, task: Task) -> np.ndarray:
        raise NotImplementedError

    def depth(self, template: int) -> int:
        return 0

    def reward(self, task: Task, template: int) -> float:
        raise NotImplementedError


class GraphEnvironment(Environment):
    """Executes the instantiated template on a graph; r_test is 1 iff gold is retrieved."""

    def __init__(self, g: KnowledgeGraph, templates: Sequence[QueryTemplate],
                 weights: RewardWeights = RewardWeights()):
        self.g = g
        self.templates = list(templates)
        self.weights = weights
        self._depth = [t.depth for t in self.templates]
        self._features: dict[str, np.ndarray] = {}
        self._rewards: dict[tuple[str, int], float] = {}

    def features(self, task: Task) -> np.ndarray:
        x = self._features.get(task.instruction)
        if x is None:
            x = featurize(task.instruction, self.g, self.dim)
            self._features[task.instruction] = x
        return x

    def depth(self, template: int) -> int:
        return self._depth[template]

    def result(self, task: Task, template: int) -> ResultSubgraph:
        name = slot_filler(task.instruction, self.g)
        if name is None:
            return ResultSubgraph()
        return execute(parse_query(self.templates[template].instantiate(name)), self.g)

    def reward(self, task: Task, template: int) -> float:
        key = (task.instruction + "\0" + ",".join(sorted(task.gold)), template)
        hit = self._rewards.get(key)
        if hit is None:
            res = self.result(task, template)
            r_test = 1.0 if task.gold <= res.names(self.g) else 0.0
            hit = reward(res, task.gold, r_test, task.r_type, self.weights)
            self._rewards[key] = hit
        return hit


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepStats:
    mean_reward: float
    grad_norm: float
    entropy: float
    max_abs_grad: float
    critic_loss: float
    degenerate: bool


def policy_gradient(params: PolicyParams, x: np.ndarray, actions: np.ndarray, adv: np.ndarray,
                    lam: float) -> np.ndarray:
    """Ascent direction of mean(adv * log pi(a|x)) + lam * mean(H(pi(.|x)))."""
    p = params.probs(x)
    b = len(actions)
    g_logits = -p * adv[:, None]
    g_logits[np.arange(b), actions] += adv
    if lam:
        logp = np.log(np.clip(p, 1e-300, None))
        h = -(p * logp).sum(axis=1, keepdims=True)
        g_logits += lam * (-p * (logp + h))
    return g_logits.T @ x / b


def train_step(params: PolicyParams, batch: Sequence[Task], cfg: TrainConfig, env: Environment,
               rng: np.random.Generator, *, update_policy: bool = True) -> StepStats:
    """One REINFORCE update with critic baseline, in place on ``params``.

    With ``update_policy=False`` only the critic learns; the gradient
    statistics are still computed.
    """
    if len(batch) != cfg.batch:
        raise ValueError(f"batch size {len(batch)} != configured {cfg.batch}")
    if params.opt_theta is None:
        params.opt_theta = Adam(params.theta.shape, cfg.lr_policy, cfg.betas, cfg.eps)
    if params.opt_psi is None:
        params.opt_psi = Adam((params.psi.size + 1,), cfg.lr_baseline, cfg.betas, cfg.eps)
    x = np.stack([env.features(t) for t in batch])
    p = params.probs(x)
    # inverse-CDF sampling, one uniform per row
    u = rng.random(len(batch))
    actions = np.minimum((p.cumsum(axis=1) < u[:, None]).sum(axis=1), p.shape[1] - 1)
    rewards = np.array([env.reward(t, int(a)) * cfg.gamma ** env.depth(int(a))
                        for t, a in zip(batch, actions)])

    base = params.baseline(x) if cfg.critic else np.zeros(len(batch))
    critic_loss = float(np.mean((params.baseline(x) - rewards) ** 2))
    if cfg.critic:
        err = 2.0 * (params.baseline(x) - rewards) / len(batch)
        grad = np.concatenate([err @ x, [err.sum()]])
        delta = params.opt_psi.step(grad)
        params.psi += delta[:-1]
        params.bias += float(delta[-1])

    adv = rewards - base
    sigma = float(adv.std())
    degenerate = sigma < 1e-6
    if degenerate:
        warnings.warn("constant advantages in batch", DegenerateBatch, stacklevel=2)
        adv = np.zeros_like(adv)
    else:
        adv = (adv - adv.mean()) / sigma
    g = policy_gradient(params, x, actions, adv, cfg.entropy)
    norm = float(np.linalg.norm(g))
    g = np.clip(g, -cfg.clip, cfg.clip)
    if update_policy:
        # ascent: feed the negated direction to the descent optimizer
        params.theta += params.opt_theta.step(-g)
    return StepStats(float(rewards.mean()), norm, float(entropy(p).mean()),
                     float(np.abs(g).max()), critic_loss, degenerate)


def train(params: PolicyParams, tasks: Sequence[Task], cfg: TrainConfig, env: Environment,
          seed: int, *, until: Callable[[PolicyParams], bool] | None = None,
          log: Callable[[int, StepStats], None] | None = None, update_policy: bool = True) -> int:
    """Run up to ``cfg.max_steps`` steps on batches drawn from ``tasks``.

    Returns the number of steps taken; stops early once ``until`` holds.
    """
    rng = np.random.default_rng(seed)
    for step in range(1, cfg.max_steps + 1):
        idx = rng.integers(0, len(tasks), cfg.batch)
        stats = train_step(params, [tasks[i] for i in idx], cfg, env, rng, update_policy=update_policy)
        if log is not None:
            log(step, stats)
        if until is not None and until(params):
            return step
    return cfg.max_steps


# ---------------------------------------------------------------------------
# Warm start
# ---------------------------------------------------------------------------

def synthetic_pairs(g: KnowledgeGraph, templates: Sequence[QueryTemplate], n: int, seed: int,
                    weights: RewardWeights = RewardWeights()) -> list[tuple[Task, int]]:
    """Instruction/template pairs derived from static dependencies.

    Each sampled function's gold set is its defining file and its static
    callees; the label is the template with the best reward on that gold set.
    """
    funcs = sorted(g.nodes[i].name for i in g.nodes_of_kind(FUNC))
    if not funcs:
        return []
    env = GraphEnvironment(g, templates, weights)
    rng = np.random.default_rng(seed)
    verbs = ("update", "fix", "change", "extend", "refactor")
    out = []
    for _ in range(n):
        name = funcs[int(rng.integers(len(funcs)))]
        nid = g.by_name[name]
        gold = {g.nodes[s].name for s in g.in_(nid, DEFINES) if g.nodes[s].kind == FILE}
        gold |= {g.nodes[d].name for d in g.out(nid, CALLS)}
        gold.add(name)
        verb = verbs[int(rng.integers(len(verbs)))]
        task = Task(f"{verb} {name} and its callers", frozenset(gold))
        scores = [env.reward(task, i) for i in range(len(templates))]
        out.append((task, int(np.argmax(scores))))
    return out


def warm_start(params: PolicyParams, pairs: Sequence[tuple[np.ndarray, int]],
               cfg: TrainConfig = TrainConfig()) -> PolicyParams:
    """Supervised cross-entropy pretraining of the template logits."""
    if not pairs:
        return params
    x = np.stack([f for f, _ in pairs])
    y = np.array([t for _, t in pairs])
    out = params.copy()
    opt = Adam(out.theta.shape, cfg.warm_lr, cfg.betas, cfg.eps)
    onehot = np.zeros((len(y), out.theta.shape[0]))
    onehot[np.arange(len(y)), y] = 1.0
    for _ in range(cfg.warm_epochs):
        p = out.probs(x)
        grad = (p - onehot).T @ x / len(y)
        out.theta += opt.step(grad)
    return out


def accuracy(params: PolicyParams, pairs: Sequence[tuple[np.ndarray, int]]) -> float:
    if not pairs:
        return math.nan
    x = np.stack([f for f, _ in pairs])
    y = np.array([t for _, t in pairs])
    return float((params.probs(x).argmax(axis=1) == y).mean())
