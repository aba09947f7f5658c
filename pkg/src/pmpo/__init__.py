"""Power-mean policy optimization: adaptive aggregation of token importance ratios."""

from ._validation import InvalidInputError, SolverError
from .aggregation import ess_norm, ess_norm_at_p, log_power_mean, power_mean_log, softmax_weights
from .clipping import ClipConfig, ClippedDeltas, clip_deltas, clip_fraction
from .grouping import Group, group_advantages
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
    update_ema,
)
from .surrogate import GeometryMode, SelectionContext, SurrogateResult, batch_loss, effective_ratio, token_gradients

__version__ = "0.1.0"

__all__ = [
    "ClipConfig",
    "ClippedDeltas",
    "EmaTracker",
    "GeometryMode",
    "Group",
    "InvalidInputError",
    "PBounds",
    "PSelection",
    "SelectionContext",
    "SolverConfig",
    "SolverError",
    "SurrogateResult",
    "batch_loss",
    "clip_deltas",
    "clip_fraction",
    "effective_ratio",
    "ess_norm",
    "ess_norm_at_p",
    "group_advantages",
    "log_power_mean",
    "power_mean_log",
    "select_p_direct",
    "select_p_schedule",
    "select_p_zscore",
    "softmax_weights",
    "solve_p_ess_match",
    "target_ess",
    "token_gradients",
    "update_ema",
]
