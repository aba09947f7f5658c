"""Sampling K responses per prompt from the old policy."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from ..grouping import Group, group_advantages
from .policy import PolicyParams, START_TOKEN, _log_softmax, state_logits
from .tasks import TaskSpec, verify_batch


@dataclass
class Trajectory:
    prompt_id: int
    tokens: np.ndarray
    old_logprobs: np.ndarray
    response_mask: np.ndarray
    reward: float
    advantage: float = 0.0
    entropy: float = 0.0  # mean per-token entropy under the sampling policy
    new_logprobs: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return int(np.count_nonzero(self.response_mask))


@dataclass
class RolloutBatch:
    """Rollout stacked into arrays, row ``b`` is one trajectory."""

    prompt_ids: np.ndarray
    tokens: np.ndarray
    old_logprobs: np.ndarray
    mask: np.ndarray
    rewards: np.ndarray
    advantages: np.ndarray
    entropies: np.ndarray

    @property
    def size(self) -> int:
        return self.tokens.shape[0]


def sample_tokens(params: PolicyParams, task: TaskSpec, prompt_ids, rng, greedy: bool = False):
    """Autoregressive decoding at temperature 1 for every row of ``prompt_ids``."""
    prompt_ids = np.asarray(prompt_ids)
    B, T = prompt_ids.size, task.episode_length
    tokens = np.zeros((B, T), dtype=np.int64)
    logps = np.zeros((B, T))
    ents = np.zeros((B, T))
    prev = np.full(B, START_TOKEN, dtype=np.int64)
    for t in range(T):
        logp = _log_softmax(state_logits(params, prompt_ids, t, prev))
        probs = np.exp(logp)
        if greedy:
            a = np.argmax(logp, axis=-1)
        else:
            u = rng.random(B)
            a = np.minimum(np.sum(np.cumsum(probs, axis=-1) < u[:, None], axis=-1), task.vocab_size - 1)
        tokens[:, t] = a
        logps[:, t] = logp[np.arange(B), a]
        ents[:, t] = np.maximum(0.0, -np.sum(probs * logp, axis=-1))
        prev = a
    return tokens, logps, ents


def rollout(params_old: PolicyParams, task: TaskSpec, prompts, K: int, rng, std_normalize: bool = False) -> List[Group]:
    """Sample ``K`` trajectories for each prompt and attach rewards and advantages."""
    prompts = np.asarray(prompts, dtype=np.int64)
    ids = np.repeat(prompts, K)
    tokens, logps, ents = sample_tokens(params_old, task, ids, rng)
    rewards = verify_batch(task, ids, tokens)
    groups = []
    for g, pid in enumerate(prompts):
        rows = slice(g * K, (g + 1) * K)
        adv = group_advantages(rewards[rows], std_normalize=std_normalize)
        trajs = [
            Trajectory(
                prompt_id=int(pid),
                tokens=tokens[b],
                old_logprobs=logps[b],
                response_mask=np.ones(task.episode_length, dtype=bool),
                reward=float(rewards[b]),
                advantage=float(adv[i]),
                entropy=float(np.mean(ents[b])),
            )
            for i, b in enumerate(range(rows.start, rows.stop))
        ]
        groups.append(Group(int(pid), trajs, rewards[rows].copy(), adv))
    return groups


def stack_groups(groups: List[Group]) -> RolloutBatch:
    trajs = [t for g in groups for t in g.trajectories]
    return RolloutBatch(
        prompt_ids=np.array([t.prompt_id for t in trajs], dtype=np.int64),
        tokens=np.stack([t.tokens for t in trajs]),
        old_logprobs=np.stack([t.old_logprobs for t in trajs]),
        mask=np.stack([t.response_mask for t in trajs]),
        rewards=np.array([t.reward for t in trajs]),
        advantages=np.array([t.advantage for t in trajs]),
        entropies=np.array([t.entropy for t in trajs]),
    )
