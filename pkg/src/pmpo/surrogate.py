"""Per-trajectory PMPO objective, its closed-form token gradients, and baselines.

For one trajectory the pipeline is: clip the deltas with the advantage
sign, measure the clip fraction on the raw deltas, pick ``p`` according to
the geometry, aggregate the clipped deltas with the power mean, and emit
``d r_hat / d delta_j`` for every token. ``p`` is a forward-only quantity:
it is never differentiated through.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._validation import InvalidInputError, check_deltas
from .aggregation import P_EPS, ess_norm_at_p, power_mean_log, softmax_weights
from .clipping import ClipConfig, ClippedDeltas, clip_deltas, clip_fraction
from .selection import (
    EmaTracker,
    PBounds,
    PSelection,
    SolverConfig,
    select_p_direct,
    select_p_schedule,
    select_p_zscore,
    solve_p_ess_match,
    target_ess,
)

GEOMETRIES = (
    "grpo",
    "gmpo",
    "pmpo-fixed",
    "pmpo-adaptive",
    "pmpo-direct",
    "pmpo-length",
    "pmpo-entropy",
    "pmpo-schedule",
)


@dataclass(frozen=True)
class GeometryMode:
    kind: str = "pmpo-adaptive"
    p_fixed: float = 0.5

    def __post_init__(self):
        if self.kind not in GEOMETRIES:
            raise InvalidInputError(f"unknown geometry {self.kind!r}; expected one of {GEOMETRIES}")
        if not (math.isfinite(self.p_fixed) and self.p_fixed >= 0):
            raise InvalidInputError(f"p_fixed must be finite and >= 0, got {self.p_fixed}")


@dataclass(frozen=True)
class SelectionContext:
    """Side inputs for the heuristic selectors (length, entropy, schedule)."""

    step: int = 0
    total_steps: int = 1
    length: Optional[float] = None
    entropy: Optional[float] = None
    length_tracker: EmaTracker = field(default_factory=EmaTracker)
    entropy_tracker: EmaTracker = field(default_factory=EmaTracker)
    alpha: float = 1.0
    warmup: int = 10


@dataclass(frozen=True)
class SurrogateResult:
    effective_ratio: float
    p_used: float
    token_grad_weights: np.ndarray
    loss_contribution: float
    selection: PSelection
    clipped: ClippedDeltas
    advantage: float
    delta_abs_mean: float
    ratio_max: float

    @property
    def n(self) -> int:
        return self.token_grad_weights.size


def token_gradients(
    clipped: ClippedDeltas, p: float, r_hat: float, length_normalized: bool = True
) -> np.ndarray:
    """Closed-form ``d r_hat / d delta_j`` with the clip mask applied.

    For the power mean (with or without the ``1/n`` factor) the derivative
    is ``r_hat * softmax(p * delta)_j``. The geometric branch gives
    ``r_hat / n`` per token when length-normalized and ``r_hat`` otherwise.
    """
    values = clipped.values
    n = values.size
    if abs(p) < P_EPS:
        base = np.full(n, r_hat / n if length_normalized else r_hat)
    else:
        base = r_hat * softmax_weights(values, p)
    return base * clipped.grad_mask


def _choose_p(kind, geometry, values, f_clip, eta, bounds, solver, context):
    """Return ``(p, iterations)`` for the requested geometry."""
    if kind == "grpo":
        return 1.0, 0
    if kind == "gmpo":
        return 0.0, 0
    if kind == "pmpo-fixed":
        return geometry.p_fixed, 0
    if kind == "pmpo-adaptive":
        sel = solve_p_ess_match(values, eta, bounds, solver, f_clip=f_clip)
        return sel.p, sel.iterations
    if kind == "pmpo-direct":
        return select_p_direct(f_clip, bounds), 0
    ctx = context or SelectionContext()
    if kind == "pmpo-length":
        length = ctx.length if ctx.length is not None else float(values.size)
        return select_p_zscore(length, ctx.length_tracker, ctx.alpha, bounds, ctx.warmup), 0
    if kind == "pmpo-entropy":
        if ctx.entropy is None:
            raise InvalidInputError("pmpo-entropy needs context.entropy")
        return select_p_zscore(ctx.entropy, ctx.entropy_tracker, ctx.alpha, bounds, ctx.warmup), 0
    return select_p_schedule(ctx.step, ctx.total_steps, bounds), 0


def effective_ratio(
    deltas,
    advantage: float,
    geometry: GeometryMode = GeometryMode(),
    clip: ClipConfig = ClipConfig(),
    bounds: PBounds = PBounds(),
    solver: SolverConfig = SolverConfig(),
    length_normalized: bool = True,
    context: Optional[SelectionContext] = None,
) -> SurrogateResult:
    """Evaluate the surrogate for one trajectory.

    ``advantage`` must be nonzero: zero-advantage trajectories have no
    defined clip direction and are skipped by the caller.
    """
    d = check_deltas(deltas)
    advantage = float(advantage)
    if advantage == 0.0 or not math.isfinite(advantage):
        raise InvalidInputError(f"advantage must be finite and nonzero, got {advantage}")
    sign = 1 if advantage > 0 else -1

    clipped = clip_deltas(d, sign, clip)
    f_clip = clip_fraction(d, clip.eps_ess)
    eta = target_ess(f_clip, d.size)
    p, iterations = _choose_p(geometry.kind, geometry, clipped.values, f_clip, eta, bounds, solver, context)

    r_hat = power_mean_log(clipped.values, p, length_normalized)
    grads = token_gradients(clipped, p, r_hat, length_normalized)
    selection = PSelection(
        p=p,
        target_ess=eta,
        achieved_ess=ess_norm_at_p(clipped.values, p),
        f_clip=f_clip,
        selector=geometry.kind,
        iterations=iterations,
    )
    return SurrogateResult(
        effective_ratio=r_hat,
        p_used=p,
        token_grad_weights=grads,
        loss_contribution=-advantage * r_hat,
        selection=selection,
        clipped=clipped,
        advantage=advantage,
        delta_abs_mean=float(np.mean(np.abs(d))),
        ratio_max=float(np.exp(np.max(d))),
    )


def batch_loss(results: Sequence, advantages, denominator: Optional[int] = None) -> float:
    """``-(1/K) * sum_k A_k * r_hat_k``.

    ``results`` may hold :class:`SurrogateResult` objects or bare ratios.
    ``denominator`` overrides ``K`` when skipped zero-advantage trajectories
    should still count toward the batch size.
    """
    ratios = np.array([getattr(r, "effective_ratio", r) for r in results], dtype=np.float64)
    adv = np.asarray(advantages, dtype=np.float64)
    if ratios.shape != adv.shape:
        raise InvalidInputError(f"length mismatch: {ratios.size} results vs {adv.size} advantages")
    k = denominator if denominator is not None else ratios.size
    if k <= 0:
        raise InvalidInputError("empty batch")
    return float(-np.sum(adv * ratios) / k)
