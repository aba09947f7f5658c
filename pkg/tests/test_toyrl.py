import math

import numpy as np
import pytest

from pmpo import InvalidInputError
from pmpo.oracle import finite_difference_loss_grad
from pmpo.toyrl import (
    PolicyParams,
    TaskSpec,
    TrainConfig,
    log_prob_and_grad,
    rollout,
    stack_groups,
    token_entropy,
    train,
    verify,
)
from pmpo.toyrl.train import evaluate_minibatch


def test_verify_last_token_key():
    task = TaskSpec("last-token-key", 16, 8, 4, seed=3)
    target = int(task.targets()[2])
    tokens = np.zeros(8, dtype=int)
    tokens[-1] = target
    assert verify(task, 2, tokens) == 1.0
    tokens[-1] = (target + 1) % 16
    assert verify(task, 2, tokens) == 0.0


def test_verify_mod_sum():
    task = TaskSpec("mod-sum", 16, 8, 4, seed=3)
    pid = 1
    target = int(task.targets()[pid])
    tokens = np.array([1, 4, 0, 0, 0, 0, 0, 0])
    tokens[1] = (target - 1) % 16
    assert verify(task, pid, tokens) == 1.0
    tokens[0] = 2
    assert verify(task, pid, tokens) == 0.0


def test_verify_targets_deterministic():
    np.testing.assert_array_equal(TaskSpec(seed=9).targets(), TaskSpec(seed=9).targets())


def test_log_prob_uniform():
    task = TaskSpec(vocab_size=8, episode_length=4, num_prompts=2)
    lp, g = log_prob_and_grad(PolicyParams.zeros(task), 1, 2, 3, 5)
    assert lp == pytest.approx(-math.log(8))
    expected = np.full(8, -1 / 8)
    expected[5] += 1
    np.testing.assert_allclose(g, expected)


def test_log_prob_saturated():
    task = TaskSpec(vocab_size=8, episode_length=4, num_prompts=2)
    params = PolicyParams.zeros(task)
    params.prompt_table[0, 6] = 50.0
    lp, g = log_prob_and_grad(params, 0, 0, 0, 6)
    assert lp == pytest.approx(0.0, abs=1e-20)
    np.testing.assert_allclose(g, 0.0, atol=1e-20)


def test_log_prob_gradient_finite_differences():
    task = TaskSpec(vocab_size=6, episode_length=3, num_prompts=2)
    params = PolicyParams.random(task, np.random.default_rng(0))
    _, g = log_prob_and_grad(params, 1, 2, 4, 3)
    h = 1e-6
    for table, row in ((params.prev_token_table, 4), (params.position_table, 2), (params.prompt_table, 1)):
        fd = np.zeros(6)
        for v in range(6):
            orig = table[row, v]
            table[row, v] = orig + h
            up = log_prob_and_grad(params, 1, 2, 4, 3)[0]
            table[row, v] = orig - h
            down = log_prob_and_grad(params, 1, 2, 4, 3)[0]
            table[row, v] = orig
            fd[v] = (up - down) / (2 * h)
        np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-10)


def test_log_prob_index_errors():
    task = TaskSpec(vocab_size=4, episode_length=2, num_prompts=1)
    with pytest.raises(InvalidInputError):
        log_prob_and_grad(PolicyParams.zeros(task), 0, 5, 0, 0)


def test_token_entropy():
    task = TaskSpec(vocab_size=8, episode_length=2, num_prompts=1)
    params = PolicyParams.zeros(task)
    assert token_entropy(params, 0, 0, 0) == pytest.approx(math.log(8))
    params.prompt_table[0, :2] = 0.0
    params.prompt_table[0, 2:] = -1e3
    assert token_entropy(params, 0, 0, 0) == pytest.approx(math.log(2))
    params.prompt_table[0, 0] = 1e3
    assert token_entropy(params, 0, 0, 0) == pytest.approx(0.0, abs=1e-12)


def test_rollout_uniform_reward_rate():
    task = TaskSpec(vocab_size=16, episode_length=8, num_prompts=64)
    groups = rollout(PolicyParams.zeros(task), task, np.arange(64), 64, np.random.default_rng(2))
    rewards = np.concatenate([g.rewards for g in groups])
    # 4096 Bernoulli(1/16) draws: sd of the mean is ~0.0038
    assert abs(rewards.mean() - 1 / 16) < 0.015
    for g in groups:
        assert abs(np.sum(g.advantages)) < 1e-12
        for t in g.trajectories:
            assert np.all(t.old_logprobs == pytest.approx(-math.log(16)))


def test_rollout_saturated_correct_policy():
    task = TaskSpec(vocab_size=16, episode_length=8, num_prompts=5)
    params = PolicyParams.zeros(task)
    params.prompt_table[np.arange(5), task.targets()] = 60.0
    groups = rollout(params, task, np.arange(5), 8, np.random.default_rng(0))
    for g in groups:
        assert np.all(g.rewards == 1.0) and g.degenerate


def test_rollout_deterministic():
    task = TaskSpec()
    params = PolicyParams.random(task, np.random.default_rng(1), 0.5)
    a = stack_groups(rollout(params, task, [3, 9], 8, np.random.default_rng(4)))
    b = stack_groups(rollout(params, task, [3, 9], 8, np.random.default_rng(4)))
    np.testing.assert_array_equal(a.tokens, b.tokens)
    np.testing.assert_array_equal(a.old_logprobs, b.old_logprobs)


def test_train_zero_steps():
    cfg = TrainConfig(total_steps=0)
    res = train(cfg)
    assert res.metrics == []
    assert all(np.all(a == 0) for a in res.params.arrays())


def test_train_zero_learning_rate():
    res = train(TrainConfig(learning_rate=0.0, total_steps=12, prompts_per_batch=8, minibatch_size=32))
    assert all(np.all(a == 0) for a in res.params.arrays())
    for m in res.metrics:
        assert m.delta_abs_mean == 0.0
        assert m.f_clip_mean == 0.0
        assert m.p_max == 0.99 and m.p_mean == pytest.approx(0.99, abs=1e-12)


def test_train_metric_bounds():
    res = train(TrainConfig(total_steps=20, prompts_per_batch=16, minibatch_size=64, task="mod-sum"))
    for m in res.metrics:
        assert 0 <= m.mean_reward <= 1
        assert 0 <= m.mean_entropy <= math.log(16) + 1e-12
        assert m.is_finite()


def _small_instance(seed=0):
    task = TaskSpec(vocab_size=8, episode_length=4, num_prompts=2, seed=seed)
    rng = np.random.default_rng(seed)
    old = PolicyParams.random(task, rng, 0.5)
    batch = stack_groups(rollout(old, task, [0, 1], 4, rng))
    # force both advantage signs regardless of the sampled rewards
    batch.advantages = np.array([0.75, -0.25, -0.25, -0.25, 0.5, 0.5, -0.5, -0.5])
    current = old.copy()
    for a in current.arrays():
        a += 0.3 * rng.standard_normal(a.shape)
    return task, batch, current


@pytest.mark.parametrize("geometry", ["grpo", "gmpo", "pmpo-adaptive", "pmpo-direct"])
@pytest.mark.parametrize("clip_mode", ["paper-max", "two-sided", "sequence", "none"])
def test_end_to_end_gradient(geometry, clip_mode):
    task, batch, params = _small_instance(1)
    cfg = TrainConfig(vocab_size=8, episode_length=4, num_prompts=2, K=4, prompts_per_batch=2,
                      geometry=geometry, clip_mode=clip_mode, clip_c=0.2)
    rows = np.arange(batch.size)
    _, grads, results, _, _ = evaluate_minibatch(params, batch, rows, cfg)
    p_values = {int(b): r.p_used for b, r in zip(rows, results)}
    fd = finite_difference_loss_grad(cfg, params, batch, p_values, rows)
    for a, f in zip(grads.arrays(), fd):
        np.testing.assert_allclose(a, f, rtol=1e-4, atol=1e-8)
