from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression

from repograph.bench import Bandit, steps_to_converge
from repograph.maintenance import Workspace
from repograph.policy import (
    DEFAULT_TEMPLATES, DegenerateBatch, Environment, PolicyParams, QueryTemplate, RewardWeights, Task,
    TemplateError, TrainConfig, accuracy, featurize, format_templates, parse_templates, reward,
    sample_query, synthetic_pairs, train, train_step, warm_start,
)
from repograph.query import ResultSubgraph
from repograph.synth import SynthConfig, SynthRepo


def _graph():
    return Workspace.build(SynthRepo(SynthConfig(entities=60, seed=1)).files()).graph


def _result(size: int) -> ResultSubgraph:
    return ResultSubgraph(frozenset(range(size)))


class ConstantReward(Environment):
    def __init__(self, value: float, n: int = 4):
        self.value = value
        self.instructions = [f"rename helper {i} in the billing module" for i in range(n)]
        self._x = {u: featurize(u) for u in self.instructions}

    @property
    def tasks(self) -> list[Task]:
        return [Task(u) for u in self.instructions]

    def features(self, task: Task) -> np.ndarray:
        return self._x[task.instruction]

    def reward(self, task: Task, template: int) -> float:
        return self.value


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def test_uniform_policy_samples_uniformly():
    g = _graph()
    templates = DEFAULT_TEMPLATES[:4]
    params = PolicyParams.zeros(4)
    name = sorted(g.by_name)[5]
    counts = np.zeros(4)
    for seed in range(10_000):
        s = sample_query(params, f"update {name}", g, templates, seed)
        counts[s.template] += 1
    assert np.all(np.abs(counts / 10_000 - 0.25) <= 0.02)
    assert math.isclose(s.entropy, math.log(4))
    assert math.isclose(s.logp, math.log(0.25))


def test_single_template_is_certain():
    g = _graph()
    s = sample_query(PolicyParams.zeros(1), "update anything", g, DEFAULT_TEMPLATES[:1], 0)
    assert s.template == 0 and s.logp == 0.0 and s.entropy == 0.0


def test_sampling_is_seeded():
    g = _graph()
    rng = np.random.default_rng(0)
    params = PolicyParams(rng.normal(size=(8, 256)), np.zeros(256))
    name = sorted(g.by_name)[3]
    a = sample_query(params, f"fix {name}", g, DEFAULT_TEMPLATES, 42)
    b = sample_query(params, f"fix {name}", g, DEFAULT_TEMPLATES, 42)
    assert a == b and a.query is not None


def test_no_overlapping_name_gives_no_query():
    s = sample_query(PolicyParams.zeros(2), "zzz qqq", _graph(), DEFAULT_TEMPLATES[:2], 0)
    assert s.query is None


def test_probabilities_sum_to_one():
    rng = np.random.default_rng(1)
    params = PolicyParams(rng.normal(scale=5, size=(8, 256)), np.zeros(256))
    p = params.probs(rng.normal(size=(50, 256)))
    assert np.all(np.abs(p.sum(axis=1) - 1.0) <= 1e-9)


# ---------------------------------------------------------------------------
# Reward
# ---------------------------------------------------------------------------


def test_reward_full_credit():
    assert math.isclose(reward(_result(10), {"a"}, 1.0, 1.0), 1.29)


def test_reward_empty_result():
    w = RewardWeights()
    assert reward(ResultSubgraph(), {"a"}, 0.0, 1.0, w) == w.type


def test_reward_size_term_alone():
    assert math.isclose(reward(_result(7), set(), 1.0, 1.0, RewardWeights(0, 0, 1e-3)), -0.007)


def test_negative_weights_rejected():
    with pytest.raises(ValueError):
        RewardWeights(size=-1)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def test_equal_rewards_leave_policy_unchanged():
    env = ConstantReward(0.5)
    params = PolicyParams.zeros(3)
    params.theta[:, 0] = [0.3, -0.1, 0.2]
    before = params.theta.copy()
    cfg = TrainConfig(batch=8, entropy=0.0, critic=False)
    with pytest.warns(DegenerateBatch):
        st = train_step(params, env.tasks * 2, cfg, env, np.random.default_rng(0))
    assert st.degenerate
    assert np.array_equal(params.theta, before)


def test_critic_regresses_to_constant_reward():
    env = ConstantReward(0.7)
    params = PolicyParams.zeros(3)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateBatch)
        train(params, env.tasks, TrainConfig(max_steps=2000), env, 0, update_policy=False)
    x = np.stack([env.features(t) for t in env.tasks])
    # least-squares fit of the critic's linear model
    design = np.hstack([x, np.ones((len(x), 1))])
    coef, *_ = np.linalg.lstsq(design, np.full(len(x), 0.7), rcond=None)
    assert np.all(np.abs(params.baseline(x) - design @ coef) <= 0.01)


def test_gradients_are_clipped():
    env = Bandit(4)
    params = PolicyParams.zeros(4)
    rng = np.random.default_rng(0)
    cfg = TrainConfig(clip=0.05)
    for _ in range(20):
        st = train_step(params, [env.tasks[i] for i in rng.integers(0, 4, cfg.batch)], cfg, env, rng)
        assert st.max_abs_grad <= 0.05


def test_batch_size_checked():
    env = Bandit(2)
    with pytest.raises(ValueError):
        train_step(PolicyParams.zeros(2), env.tasks, TrainConfig(), env, np.random.default_rng(0))


def test_two_template_bandit_converges():
    steps, p = steps_to_converge(2, 1)
    assert p >= 0.95 and steps <= 10_000


def _bandit_p(lam: float, steps: int) -> float:
    env = Bandit(2)
    params = PolicyParams.zeros(2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateBatch)
        train(params, env.tasks, TrainConfig(entropy=lam, max_steps=steps), env, 1)
    return float(params.probs(env.matrix())[:, env.best].max())


def test_entropy_bonus_slows_collapse():
    assert _bandit_p(0.5, 3000) < _bandit_p(0.0, 3000) - 0.05


def test_large_entropy_bonus_holds_near_uniform():
    assert abs(_bandit_p(5.0, 4000) - 0.5) <= 0.1


@pytest.mark.xfail(strict=True, reason="normalized advantages outweigh a 0.5 entropy bonus; see notes")
def test_entropy_half_holds_near_uniform():
    assert abs(_bandit_p(0.5, 4000) - 0.5) <= 0.1


def test_entropy_zero_collapses():
    assert _bandit_p(0.0, 6000) >= 0.95


# ---------------------------------------------------------------------------
# Warm start
# ---------------------------------------------------------------------------


def _pairs(n: int, seed: int):
    g = _graph()
    return [(featurize(t.instruction, g), y) for t, y in synthetic_pairs(g, DEFAULT_TEMPLATES, n, seed)]


def test_warm_start_matches_logistic_regression():
    train_set, held_out = _pairs(300, 0), _pairs(200, 1)
    params = warm_start(PolicyParams.zeros(len(DEFAULT_TEMPLATES)), train_set)
    x = np.stack([f for f, _ in train_set])
    y = np.array([t for _, t in train_set])
    oracle = LogisticRegression(max_iter=2000).fit(x, y)
    assert oracle.score(x, y) >= 0.9
    assert accuracy(params, train_set) >= 0.9
    xh = np.stack([f for f, _ in held_out])
    agree = (params.probs(xh).argmax(axis=1) == oracle.predict(xh)).mean()
    assert agree >= 0.9


def test_warm_start_on_no_pairs_is_identity():
    params = PolicyParams.zeros(3)
    assert warm_start(params, []) is params


def test_warm_start_shortens_training():
    env = Bandit(4)
    x = env.matrix()

    def done(p):
        return bool(p.probs(x)[:, env.best].min() >= 0.95)

    cfg = TrainConfig(max_steps=10_000)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateBatch)
        cold = train(PolicyParams.zeros(4), env.tasks, cfg, env, 2, until=done)
        pre = warm_start(PolicyParams.zeros(4), [(row, env.best) for row in x], TrainConfig(warm_epochs=20))
        warm = train(pre, env.tasks, cfg, env, 2, until=done)
    assert warm < cold


# ---------------------------------------------------------------------------
# Templates and persistence
# ---------------------------------------------------------------------------


def test_template_depths():
    assert [t.depth for t in DEFAULT_TEMPLATES[:5]] == [0, 1, 1, 1, 2]


@pytest.mark.parametrize("text", ["MATCH (f) RETURN f", 'MATCH (f {name="{NAME}"}) RETURN', "{NAME} {NAME}"])
def test_bad_templates_rejected(text):
    with pytest.raises(TemplateError):
        QueryTemplate("T9", text)


def test_template_registry_round_trip():
    assert parse_templates(format_templates(DEFAULT_TEMPLATES)) == list(DEFAULT_TEMPLATES)
    with pytest.raises(TemplateError):
        parse_templates("T1\t" + DEFAULT_TEMPLATES[0].text + "\nT1\t" + DEFAULT_TEMPLATES[1].text)
    with pytest.raises(TemplateError):
        parse_templates("bad line")


def test_params_save_load(tmp_path):
    rng = np.random.default_rng(3)
    params = PolicyParams(rng.normal(size=(3, 256)), rng.normal(size=256), 0.25)
    path = tmp_path / "policy.params"
    params.save(path)
    back = PolicyParams.load(path)
    assert path.exists()
    assert np.array_equal(back.theta, params.theta) and np.array_equal(back.psi, params.psi)
    assert back.bias == 0.25
