"""Desk-scale RL harness: synthetic tasks, a tabular softmax policy, and the training loop."""

from .policy import PolicyParams, log_prob_and_grad, sequence_log_probs, token_entropy
from .rollout import RolloutBatch, Trajectory, rollout, stack_groups
from .tasks import TaskSpec, verify
from .train import TrainConfig, TrainResult, train

__all__ = [
    "PolicyParams",
    "RolloutBatch",
    "TaskSpec",
    "TrainConfig",
    "TrainResult",
    "Trajectory",
    "log_prob_and_grad",
    "rollout",
    "sequence_log_probs",
    "stack_groups",
    "token_entropy",
    "train",
    "verify",
]
