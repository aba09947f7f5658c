"""Synthetic verifiable-reward tasks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .._validation import InvalidInputError

TASKS = ("last-token-key", "mod-sum")


@dataclass(frozen=True)
class TaskSpec:
    """A family of prompts, each with a hidden target drawn from ``seed``.

    last-token-key
        reward 1 iff the final token equals the prompt's target.
    mod-sum
        reward 1 iff ``sum(tokens) % vocab_size`` equals the prompt's target.
    """

    kind: str = "last-token-key"
    vocab_size: int = 16
    episode_length: int = 8
    num_prompts: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.kind not in TASKS:
            raise InvalidInputError(f"unknown task {self.kind!r}; expected one of {TASKS}")
        if self.vocab_size < 2 or self.episode_length < 1 or self.num_prompts < 1:
            raise InvalidInputError("need vocab_size >= 2, episode_length >= 1, num_prompts >= 1")

    def targets(self) -> np.ndarray:
        rng = np.random.default_rng(self.seed)
        return rng.integers(0, self.vocab_size, size=self.num_prompts)


def verify_batch(task: TaskSpec, prompt_ids, tokens, targets=None) -> np.ndarray:
    """Vectorized :func:`verify` over rows of ``tokens``."""
    tokens = np.asarray(tokens)
    prompt_ids = np.asarray(prompt_ids)
    if targets is None:
        targets = task.targets()
    goal = targets[prompt_ids]
    if task.kind == "last-token-key":
        hit = tokens[..., -1] == goal
    else:
        hit = np.sum(tokens, axis=-1) % task.vocab_size == goal
    return hit.astype(np.float64)


def verify(task: TaskSpec, prompt_id: int, tokens) -> float:
    """Binary reward for one response."""
    tokens = np.asarray(tokens)
    if tokens.ndim != 1 or tokens.size != task.episode_length:
        raise InvalidInputError(f"expected {task.episode_length} tokens, got shape {tokens.shape}")
    if not 0 <= prompt_id < task.num_prompts:
        raise InvalidInputError(f"prompt_id {prompt_id} out of range")
    return float(verify_batch(task, np.array([prompt_id]), tokens[None, :])[0])
