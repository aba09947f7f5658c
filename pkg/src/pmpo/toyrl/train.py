"""Outer RL loop: rollout under a frozen snapshot, then minibatch surrogate updates."""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional

import numpy as np

from .._validation import InvalidInputError
from ..clipping import ClipConfig
from ..diagnostics import MetricsRecord, record
from ..selection import EmaTracker, PBounds, SolverConfig, update_ema
from ..surrogate import GeometryMode, SelectionContext, SurrogateResult, batch_loss, effective_ratio
from .optim import SGD, Adam, clip_grad_norm
from .policy import PolicyParams, accumulate_grad, sequence_log_probs
from .rollout import RolloutBatch, rollout, stack_groups
from .tasks import TaskSpec

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    """Every knob of a run; field names double as config-file keys."""

    # task
    task: str = "last-token-key"
    vocab_size: int = 16
    episode_length: int = 8
    num_prompts: int = 64
    task_seed: int = 0
    # sampling / optimization
    K: int = 8
    prompts_per_batch: int = 64
    inner_epochs: int = 2
    minibatch_size: int = 256
    learning_rate: float = 0.1
    adam_beta1: float = 0.9
    adam_beta2: float = 0.95
    adam_eps: float = 1e-8
    optimizer: str = "adam"
    grad_norm_clip: float = 1.0
    total_steps: int = 300
    seed: int = 1
    std_normalize: bool = False
    # aggregation
    geometry: str = "pmpo-adaptive"
    p_fixed: float = 0.5
    p_min: float = 0.01
    p_max: float = 0.99
    clip_mode: str = "paper-max"
    clip_c: float = 0.4
    eps_ess: float = 0.1
    length_normalized: bool = True
    solver_tol: float = 1e-3
    solver_max_iter: int = 60
    solver_p_tol: float = 1e-3
    # heuristic selectors
    ema_decay: float = 0.99
    heuristic_alpha: float = 1.0
    heuristic_warmup: int = 10

    def __post_init__(self):
        positive = ("K", "prompts_per_batch", "inner_epochs", "minibatch_size", "solver_max_iter")
        for name in positive:
            if getattr(self, name) < 1:
                raise InvalidInputError(f"{name} must be >= 1")
        if self.K < 2:
            raise InvalidInputError("K must be >= 2 for group advantages")
        if self.total_steps < 0 or self.learning_rate < 0:
            raise InvalidInputError("total_steps and learning_rate must be >= 0")
        if self.prompts_per_batch > self.num_prompts:
            raise InvalidInputError("prompts_per_batch exceeds num_prompts")
        if self.optimizer not in ("adam", "sgd"):
            raise InvalidInputError(f"unknown optimizer {self.optimizer!r}")
        # construct once to surface validation errors early
        self.geometry_mode(), self.clip_config(), self.bounds(), self.solver(), self.task_spec()

    @classmethod
    def keys(cls) -> List[str]:
        return [f.name for f in dataclasses.fields(cls)]

    def task_spec(self) -> TaskSpec:
        return TaskSpec(self.task, self.vocab_size, self.episode_length, self.num_prompts, self.task_seed)

    def geometry_mode(self) -> GeometryMode:
        return GeometryMode(self.geometry, self.p_fixed)

    def clip_config(self) -> ClipConfig:
        return ClipConfig(self.clip_mode, self.clip_c, self.eps_ess)

    def bounds(self) -> PBounds:
        return PBounds(self.p_min, self.p_max)

    def solver(self) -> SolverConfig:
        return SolverConfig(self.solver_tol, self.solver_max_iter, self.solver_p_tol)


@dataclass
class TrainResult:
    params: PolicyParams
    metrics: List[MetricsRecord] = field(default_factory=list)
    aborted: Optional[dict] = None

    @property
    def summary(self) -> dict:
        last = self.metrics[-1] if self.metrics else None
        return {
            "steps": len(self.metrics),
            "final_mean_reward": last.mean_reward if last else None,
            "final_p_mean": last.p_mean if last else None,
            "aborted": self.aborted,
        }


class _Trackers:
    def __init__(self, decay):
        self.length = EmaTracker(decay=decay)
        self.entropy = EmaTracker(decay=decay)

    def update(self, batch: RolloutBatch):
        lengths = batch.mask.sum(axis=1)
        for b in range(batch.size):
            self.length = update_ema(self.length, float(lengths[b]))
            self.entropy = update_ema(self.entropy, float(batch.entropies[b]))


def evaluate_minibatch(
    params: PolicyParams,
    batch: RolloutBatch,
    rows: np.ndarray,
    config: TrainConfig,
    step: int = 0,
    trackers: Optional[_Trackers] = None,
):
    """Loss, parameter gradient and per-trajectory results on ``rows`` of ``batch``."""
    ids, toks = batch.prompt_ids[rows], batch.tokens[rows]
    new_lp, logp_all, ent = sequence_log_probs(params, ids, toks)
    deltas = new_lp - batch.old_logprobs[rows]
    mask = batch.mask[rows]
    geometry, clip, bounds, solver = config.geometry_mode(), config.clip_config(), config.bounds(), config.solver()
    trackers = trackers or _Trackers(config.ema_decay)
    warmup = config.heuristic_warmup * config.prompts_per_batch * config.K

    coef = np.zeros(deltas.shape)
    results: List[SurrogateResult] = []
    active_adv = []
    degenerate = []
    for i, b in enumerate(rows):
        adv = batch.advantages[b]
        d = deltas[i][mask[i]]
        if adv == 0.0:
            degenerate.append(d)
            continue
        ctx = SelectionContext(
            step=step,
            total_steps=max(config.total_steps, 1),
            length=float(d.size),
            entropy=float(batch.entropies[b]),
            length_tracker=trackers.length,
            entropy_tracker=trackers.entropy,
            alpha=config.heuristic_alpha,
            warmup=warmup,
        )
        res = effective_ratio(d, adv, geometry, clip, bounds, solver, config.length_normalized, ctx)
        results.append(res)
        active_adv.append(adv)
        g = np.zeros(mask.shape[1])
        g[mask[i]] = res.token_grad_weights
        coef[i] = -(adv / len(rows)) * g
    loss = batch_loss(results, np.array(active_adv), denominator=len(rows)) if results else 0.0
    grads = accumulate_grad(params, ids, toks, coef, logp_all)
    entropy = float(np.mean(ent[mask]))
    return loss, grads, results, degenerate, entropy


def train(
    config: TrainConfig,
    task: Optional[TaskSpec] = None,
    sinks: Iterable[Callable[[MetricsRecord], None]] = (),
    prompt_pool: Optional[np.ndarray] = None,
) -> TrainResult:
    """Run ``config.total_steps`` optimizer steps and return the final policy.

    All randomness (prompt draws, sampling, minibatch shuffles) comes from a
    single generator seeded with ``config.seed``.
    """
    task = task or config.task_spec()
    sinks = list(sinks)
    rng = np.random.default_rng(config.seed)
    params = PolicyParams.zeros(task)
    result = TrainResult(params=params)
    if config.total_steps == 0:
        return result

    if config.optimizer == "adam":
        opt = Adam(params.arrays(), config.learning_rate, (config.adam_beta1, config.adam_beta2), config.adam_eps)
    else:
        opt = SGD(params.arrays(), config.learning_rate)
    pool = np.arange(task.num_prompts) if prompt_pool is None else np.asarray(prompt_pool)
    trackers = _Trackers(config.ema_decay)
    diag_clip = config.clip_config()

    step = 0
    while step < config.total_steps:
        old = params.copy()
        prompts = rng.choice(pool, size=min(config.prompts_per_batch, pool.size), replace=False)
        batch = stack_groups(rollout(old, task, prompts, config.K, rng, config.std_normalize))
        mean_reward = float(np.mean(batch.rewards))

        for _ in range(config.inner_epochs):
            order = rng.permutation(batch.size)
            for start in range(0, batch.size, config.minibatch_size):
                if step >= config.total_steps:
                    break
                rows = order[start : start + config.minibatch_size]
                loss, grads, results, degenerate, entropy = evaluate_minibatch(
                    params, batch, rows, config, step, trackers
                )
                grad_list = list(grads.arrays())
                grad_norm = clip_grad_norm(grad_list, config.grad_norm_clip)
                if not results:
                    # all-degenerate minibatch: geometry diagnostics only, advantage sign taken as +1
                    results = [
                        effective_ratio(d, 1.0, config.geometry_mode(), diag_clip, config.bounds(),
                                        config.solver(), config.length_normalized,
                                        SelectionContext(step=step, total_steps=config.total_steps,
                                                         length=float(d.size), warmup=10**9))
                        for d in degenerate
                    ]
                opt.step(grad_list)
                rec = record(step, results, mean_reward=mean_reward, mean_entropy=entropy,
                             grad_norm=grad_norm, loss=loss)
                result.metrics.append(rec)
                for sink in sinks:
                    sink(rec)
                if not (math.isfinite(loss) and rec.is_finite() and params.all_finite()):
                    bad = [int(rows[i]) for i, r in enumerate(results) if not math.isfinite(r.effective_ratio)]
                    result.aborted = {"step": step, "trajectories": bad, "loss": loss}
                    logger.error("non-finite value at step %d (trajectories %s); aborting", step, bad)
                    return result
                step += 1
            if step >= config.total_steps:
                break
        trackers.update(batch)
    return result
