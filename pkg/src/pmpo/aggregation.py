"""Log-domain power means, induced softmax weights and normalized ESS.

Every function here takes a vector of per-token log-ratio deltas
``log(pi_new / pi_old)`` for the valid response tokens of one trajectory.
"""

from __future__ import annotations

import numpy as np

from ._validation import InvalidInputError, check_deltas, check_finite_scalar

# Below this |p| the geometric-mean limit is used instead of (LSE - ln n) / p.
P_EPS = 1e-6


def _logsumexp(x: np.ndarray) -> float:
    m = np.max(x)
    return float(m + np.log(np.sum(np.exp(x - m))))


def log_power_mean(deltas, p: float, length_normalized: bool = True) -> float:
    """Natural log of :func:`power_mean_log`; useful when the mean itself overflows."""
    d = check_deltas(deltas)
    p = check_finite_scalar(p, "p")
    if abs(p) < P_EPS:
        return float(np.mean(d)) if length_normalized else float(np.sum(d))
    lse = _logsumexp(p * d)
    if length_normalized:
        lse -= np.log(d.size)
    return lse / p


def power_mean_log(deltas, p: float, length_normalized: bool = True) -> float:
    """Power mean of order ``p`` of the ratios ``exp(deltas)``.

    Computed as ``exp((LSE(p * deltas) - ln n) / p)``. With
    ``length_normalized=False`` the ``ln n`` term is dropped, giving the
    sum-aggregated variant. For ``|p| < P_EPS`` the geometric limit
    ``exp(mean(deltas))`` (or ``exp(sum(deltas))``) is returned.

    >>> round(power_mean_log(np.log([1.0, 4.0]), 0.5), 12)
    2.25
    """
    return float(np.exp(log_power_mean(deltas, p, length_normalized)))


def softmax_weights(deltas, p: float) -> np.ndarray:
    """Token weights ``softmax(p * deltas)`` with max-subtraction.

    ``p == 0`` returns the exact uniform vector.
    """
    d = check_deltas(deltas)
    p = check_finite_scalar(p, "p")
    if p < 0:
        raise InvalidInputError(f"p must be >= 0 for softmax weights, got {p}")
    if p == 0.0:
        return np.full(d.size, 1.0 / d.size)
    z = p * d
    e = np.exp(z - np.max(z))
    return e / np.sum(e)


def ess_norm(weights) -> float:
    """Normalized effective sample size ``(1/n) / sum(w**2)``, in ``[1/n, 1]``.

    Weights are renormalized first, so any nonnegative vector with positive
    mass is accepted.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise InvalidInputError("weights must be a non-empty 1-D vector")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise InvalidInputError("weights must be finite and nonnegative")
    total = np.sum(w)
    if total <= 0:
        raise InvalidInputError("weights sum to zero")
    n = w.size
    # (sum w)^2 / (n sum w^2) is exact for uniform input, normalized or not
    value = total * total / (n * np.sum(w * w))
    # rounding can push a uniform vector a hair outside the range
    return float(min(1.0, max(1.0 / n, value)))


def ess_norm_at_p(deltas, p: float) -> float:
    """``ess_norm(softmax_weights(deltas, p))``."""
    d = check_deltas(deltas)
    p = check_finite_scalar(p, "p")
    if p < 0:
        raise InvalidInputError(f"p must be >= 0, got {p}")
    z = p * d
    # unnormalized shifted weights: ESS is scale-free
    return ess_norm(np.exp(z - np.max(z)))
