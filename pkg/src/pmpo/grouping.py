"""Group-relative advantages over the K samples drawn for one prompt."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, List

import numpy as np

from ._validation import InvalidInputError


def group_advantages(rewards, std_normalize: bool = False, eps: float = 1e-6) -> np.ndarray:
    """``A_k = R_k - mean(R)``; optionally divided by the group std (off by default)."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.ndim != 1 or r.size < 2:
        raise InvalidInputError(f"a group needs K >= 2 rewards, got shape {r.shape}")
    adv = r - r.mean()
    if std_normalize:
        adv = adv / (r.std() + eps)
    return adv


@dataclass
class Group:
    prompt_id: int
    trajectories: List[Any] = field(default_factory=list)
    rewards: np.ndarray = None
    advantages: np.ndarray = None

    @property
    def degenerate(self) -> bool:
        """True when every advantage is zero (all rewards equal)."""
        return bool(np.all(self.advantages == 0.0))
