"""Choosing the power-mean exponent ``p`` for a trajectory.

The main selector is clip-aware ESS matching: the clip fraction sets a
target normalized ESS and bisection finds the ``p`` whose induced softmax
weights hit it. The remaining selectors are the baselines (direct linear
map, length/entropy z-score, cosine schedule).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

from ._validation import InvalidInputError, SolverError, check_deltas
from .aggregation import ess_norm_at_p


@dataclass(frozen=True)
class PBounds:
    p_min: float = 0.01
    p_max: float = 0.99

    def __post_init__(self):
        if not 0 < self.p_min < self.p_max:
            raise InvalidInputError(f"need 0 < p_min < p_max, got [{self.p_min}, {self.p_max}]")

    def clamp(self, p: float) -> float:
        return min(self.p_max, max(self.p_min, p))


@dataclass(frozen=True)
class SolverConfig:
    """Bisection settings.

    ``tol`` bounds the ESS mismatch; ``p_tol`` bounds the half-width of the
    final bracket so flat ESS curves still pin ``p`` down.
    """

    tol: float = 1e-3
    max_iter: int = 60
    p_tol: float = 1e-3

    def __post_init__(self):
        if not (self.tol > 0 and self.p_tol > 0 and self.max_iter >= 1):
            raise InvalidInputError("solver tolerances must be > 0 and max_iter >= 1")


@dataclass(frozen=True)
class EmaTracker:
    mean: float = 0.0
    variance: float = 0.0
    decay: float = 0.99
    count: int = 0

    def __post_init__(self):
        if not 0 < self.decay < 1:
            raise InvalidInputError(f"EMA decay must lie in (0, 1), got {self.decay}")
        if self.variance < 0:
            raise InvalidInputError("EMA variance must be nonnegative")

    def reset(self) -> "EmaTracker":
        return EmaTracker(decay=self.decay)


@dataclass(frozen=True)
class PSelection:
    p: float
    target_ess: float
    achieved_ess: float
    f_clip: Optional[float] = None
    selector: str = "ess-match"
    iterations: int = 0


def target_ess(f_clip: float, n: int) -> float:
    """Target normalized ESS ``1/n + f_clip * (1 - 1/n)``.

    Evaluated as ``f_clip + (1 - f_clip) / n`` so both endpoints are exact.
    """
    if not 0.0 <= f_clip <= 1.0:
        raise InvalidInputError(f"f_clip must lie in [0, 1], got {f_clip}")
    if n < 1:
        raise InvalidInputError(f"n must be positive, got {n}")
    return f_clip + (1.0 - f_clip) / n


def solve_p_ess_match(
    clipped_deltas,
    target: float,
    bounds: PBounds = PBounds(),
    solver: SolverConfig = SolverConfig(),
    f_clip: Optional[float] = None,
) -> PSelection:
    """Bisect for ``p`` in ``bounds`` with ``ess_norm_at_p(p) == target``.

    ESS is non-increasing in ``p``, so a target above ``ESS(p_min)`` returns
    ``p_min`` and one at or below ``ESS(p_max)`` returns ``p_max``. This
    covers constant deltas (ESS identically 1) and ``target = 1/n``.
    """
    d = check_deltas(clipped_deltas)
    if not 0.0 < target <= 1.0:
        raise InvalidInputError(f"target ESS must lie in (0, 1], got {target}")
    lo, hi = bounds.p_min, bounds.p_max

    ess_lo = ess_norm_at_p(d, lo)
    if target >= ess_lo:
        return PSelection(lo, target, ess_lo, f_clip)
    ess_hi = ess_norm_at_p(d, hi)
    if target <= ess_hi:
        return PSelection(hi, target, ess_hi, f_clip)

    for it in range(1, solver.max_iter + 1):
        mid = 0.5 * (lo + hi)
        ess = ess_norm_at_p(d, mid)
        gap = ess - target
        if abs(gap) <= solver.tol and 0.5 * (hi - lo) <= solver.p_tol:
            return PSelection(mid, target, ess, f_clip, iterations=it)
        if gap > 0:
            lo = mid
        else:
            hi = mid
    raise SolverError(
        f"ESS bisection did not converge in {solver.max_iter} iterations "
        f"(target={target}, bracket=[{lo}, {hi}], n={d.size})"
    )


def select_p_direct(f_clip: float, bounds: PBounds = PBounds()) -> float:
    """Scale-dependent baseline ``p = 1 - f_clip``, clamped to ``bounds``."""
    return bounds.clamp(1.0 - f_clip)


def select_p_zscore(
    statistic: float,
    tracker: EmaTracker,
    alpha: float = 1.0,
    bounds: PBounds = PBounds(),
    warmup: int = 10,
    var_floor: float = 1e-8,
) -> float:
    """Sigmoid map of a z-scored statistic: high z gives a conservative ``p``.

    ``z`` is forced to zero while ``tracker.count < warmup``.
    """
    if tracker.count < warmup:
        z = 0.0
    else:
        z = (statistic - tracker.mean) / math.sqrt(max(tracker.variance, var_floor))
    x = -alpha * z
    # numerically safe logistic
    sig = 1.0 / (1.0 + math.exp(-x)) if x >= 0 else math.exp(x) / (1.0 + math.exp(x))
    return bounds.p_min + (bounds.p_max - bounds.p_min) * sig


def select_p_schedule(step: int, total_steps: int, bounds: PBounds = PBounds()) -> float:
    """Cosine decay from ``p_max`` at step 0 to ``p_min`` at ``total_steps``."""
    if total_steps < 1:
        raise InvalidInputError("total_steps must be positive")
    step = min(max(step, 0), total_steps)
    frac = 0.5 * (1.0 + math.cos(math.pi * step / total_steps))
    return bounds.p_min + (bounds.p_max - bounds.p_min) * frac


def update_ema(tracker: EmaTracker, observation: float) -> EmaTracker:
    """Return a new tracker with ``observation`` folded into the mean and variance."""
    x = float(observation)
    if not math.isfinite(x):
        raise InvalidInputError("EMA observation must be finite")
    if tracker.count == 0:
        return replace(tracker, mean=x, variance=0.0, count=1)
    a = tracker.decay
    mean = a * tracker.mean + (1 - a) * x
    var = a * tracker.variance + (1 - a) * (x - mean) ** 2
    return replace(tracker, mean=mean, variance=var, count=tracker.count + 1)
