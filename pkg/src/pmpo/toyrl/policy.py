"""Factored linear-softmax autoregressive policy with analytic gradients.

The logits for the state (prompt, position, previous token) are the sum of
one row from each of three tables. Position 0 uses token 0 as its
"previous token".
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .._validation import InvalidInputError
from .tasks import TaskSpec

START_TOKEN = 0


@dataclass
class PolicyParams:
    prev_token_table: np.ndarray  # (V, V)
    position_table: np.ndarray  # (T, V)
    prompt_table: np.ndarray  # (P, V)

    @classmethod
    def zeros(cls, task: TaskSpec) -> "PolicyParams":
        V, T, P = task.vocab_size, task.episode_length, task.num_prompts
        return cls(np.zeros((V, V)), np.zeros((T, V)), np.zeros((P, V)))

    @classmethod
    def random(cls, task: TaskSpec, rng, scale: float = 1.0) -> "PolicyParams":
        p = cls.zeros(task)
        for arr in p.arrays():
            arr[...] = scale * rng.standard_normal(arr.shape)
        return p

    def arrays(self):
        return (self.prev_token_table, self.position_table, self.prompt_table)

    def copy(self) -> "PolicyParams":
        return PolicyParams(*(a.copy() for a in self.arrays()))

    def zeros_like(self) -> "PolicyParams":
        return PolicyParams(*(np.zeros_like(a) for a in self.arrays()))

    @property
    def vocab_size(self) -> int:
        return self.prev_token_table.shape[0]

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


def prev_tokens(tokens: np.ndarray) -> np.ndarray:
    """Previous-token context for each position of ``tokens`` (shape ``(B, T)``)."""
    prev = np.empty_like(tokens)
    prev[:, 0] = START_TOKEN
    prev[:, 1:] = tokens[:, :-1]
    return prev


def state_logits(params: PolicyParams, prompt_ids, positions, prev) -> np.ndarray:
    return params.prev_token_table[prev] + params.position_table[positions] + params.prompt_table[prompt_ids]


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    m = np.max(logits, axis=-1, keepdims=True)
    z = logits - m
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def _check_state(params, prompt_id, position, prev_token):
    V = params.vocab_size
    if not 0 <= prompt_id < params.prompt_table.shape[0]:
        raise InvalidInputError(f"prompt_id {prompt_id} out of range")
    if not 0 <= position < params.position_table.shape[0]:
        raise InvalidInputError(f"position {position} out of range")
    if not 0 <= prev_token < V:
        raise InvalidInputError(f"prev_token {prev_token} out of range")


def log_prob_and_grad(params: PolicyParams, prompt_id: int, position: int, prev_token: int, action: int):
    """``log pi(action | state)`` and its gradient w.r.t. each active table row.

    The three active rows share the same gradient ``one_hot(action) - softmax``,
    so a single vector is returned.
    """
    _check_state(params, prompt_id, position, prev_token)
    if not 0 <= action < params.vocab_size:
        raise InvalidInputError(f"action {action} out of range")
    logp = _log_softmax(state_logits(params, prompt_id, position, prev_token))
    grad = -np.exp(logp)
    grad[action] += 1.0
    return float(logp[action]), grad


def token_entropy(params: PolicyParams, prompt_id: int, position: int, prev_token: int) -> float:
    """Shannon entropy (nats) of the next-token distribution at a state."""
    _check_state(params, prompt_id, position, prev_token)
    logp = _log_softmax(state_logits(params, prompt_id, position, prev_token))
    p = np.exp(logp)
    return float(max(0.0, -np.sum(p * logp)))


def sequence_log_probs(params: PolicyParams, prompt_ids, tokens):
    """Per-token log-probs, full log-softmax tables and entropies for a batch.

    Returns ``(logp_taken (B, T), logp_all (B, T, V), entropy (B, T))``.
    """
    tokens = np.asarray(tokens)
    B, T = tokens.shape
    positions = np.broadcast_to(np.arange(T), (B, T))
    logits = state_logits(params, np.asarray(prompt_ids)[:, None], positions, prev_tokens(tokens))
    logp_all = _log_softmax(logits)
    taken = np.take_along_axis(logp_all, tokens[..., None], axis=-1)[..., 0]
    probs = np.exp(logp_all)
    entropy = np.maximum(0.0, -np.sum(probs * logp_all, axis=-1))
    return taken, logp_all, entropy


def accumulate_grad(params: PolicyParams, prompt_ids, tokens, coef, logp_all=None) -> PolicyParams:
    """Gradient of ``sum_{b,t} coef[b,t] * log pi(tokens[b,t] | state)`` w.r.t. every table."""
    tokens = np.asarray(tokens)
    prompt_ids = np.asarray(prompt_ids)
    B, T = tokens.shape
    if logp_all is None:
        _, logp_all, _ = sequence_log_probs(params, prompt_ids, tokens)
    row = -np.exp(logp_all) * coef[..., None]
    np.put_along_axis(row, tokens[..., None], np.take_along_axis(row, tokens[..., None], -1) + coef[..., None], -1)
    V = params.vocab_size
    grads = params.zeros_like()
    flat = row.reshape(B * T, V)
    np.add.at(grads.prev_token_table, prev_tokens(tokens).ravel(), flat)
    np.add.at(grads.position_table, np.tile(np.arange(T), B), flat)
    np.add.at(grads.prompt_table, np.repeat(prompt_ids, T), flat)
    return grads
