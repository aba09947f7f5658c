"""Estimator-style wrapper around the toy RL trainer."""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted, column_or_1d

from ._validation import InvalidInputError
from .config import config_from_mapping
from .toyrl.rollout import sample_tokens
from .toyrl.tasks import verify_batch
from .toyrl.train import TrainConfig, train


class PMPOPolicy(BaseEstimator):
    """Train a tabular policy on a verifiable toy task with power-mean aggregation.

    ``X`` is a vector of prompt ids. ``fit`` restricts training to those
    prompts (all prompts when ``X`` is None), ``predict`` returns greedy
    token sequences and ``score`` their mean reward. Knobs not exposed as
    constructor arguments are taken from ``base_config``.
    """

    def __init__(
        self,
        task: str = "last-token-key",
        vocab_size: int = 16,
        episode_length: int = 8,
        num_prompts: int = 64,
        geometry: str = "pmpo-adaptive",
        p_fixed: float = 0.5,
        p_min: float = 0.01,
        p_max: float = 0.99,
        clip_mode: str = "paper-max",
        clip_c: float = 0.4,
        eps_ess: float = 0.1,
        K: int = 8,
        prompts_per_batch: int = 64,
        learning_rate: float = 0.1,
        total_steps: int = 300,
        random_state: int = 1,
        base_config: Optional[TrainConfig] = None,
    ):
        self.task = task
        self.vocab_size = vocab_size
        self.episode_length = episode_length
        self.num_prompts = num_prompts
        self.geometry = geometry
        self.p_fixed = p_fixed
        self.p_min = p_min
        self.p_max = p_max
        self.clip_mode = clip_mode
        self.clip_c = clip_c
        self.eps_ess = eps_ess
        self.K = K
        self.prompts_per_batch = prompts_per_batch
        self.learning_rate = learning_rate
        self.total_steps = total_steps
        self.random_state = random_state
        self.base_config = base_config

    def _train_config(self, pool_size: int) -> TrainConfig:
        params = self.get_params(deep=False)
        base = params.pop("base_config")
        params["seed"] = params.pop("random_state")
        params["prompts_per_batch"] = min(params["prompts_per_batch"], pool_size)
        return config_from_mapping(params, base)

    def _check_prompts(self, X, num_prompts: int) -> np.ndarray:
        ids = column_or_1d(np.asarray(X))
        if ids.size == 0:
            raise InvalidInputError("X must contain at least one prompt id")
        if not np.issubdtype(ids.dtype, np.integer):
            if not np.all(np.mod(ids, 1) == 0):
                raise InvalidInputError("prompt ids must be integers")
            ids = ids.astype(np.int64)
        if ids.min() < 0 or ids.max() >= num_prompts:
            raise InvalidInputError(f"prompt ids must lie in [0, {num_prompts})")
        return ids

    def fit(self, X=None, y=None):
        pool = np.arange(self.num_prompts) if X is None else np.unique(self._check_prompts(X, self.num_prompts))
        config = self._train_config(pool.size)
        result = train(config, prompt_pool=pool)
        self.config_ = config
        self.task_spec_ = config.task_spec()
        self.params_ = result.params
        self.metrics_ = result.metrics
        self.aborted_ = result.aborted
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        ids = self._check_prompts(X, self.task_spec_.num_prompts)
        tokens, _, _ = sample_tokens(self.params_, self.task_spec_, ids, rng=None, greedy=True)
        return tokens

    def score(self, X, y=None) -> float:
        """Mean verifier reward of the greedy responses to ``X``."""
        check_is_fitted(self, "params_")
        ids = self._check_prompts(X, self.task_spec_.num_prompts)
        return float(np.mean(verify_batch(self.task_spec_, ids, self.predict(ids))))

