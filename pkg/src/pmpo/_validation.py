"""Input validation helpers shared across the package."""

from __future__ import annotations

import numpy as np


class InvalidInputError(ValueError):
    """Raised when an argument violates a documented precondition."""


class SolverError(RuntimeError):
    """Raised when the ESS bisection fails to converge within its budget."""


def check_deltas(deltas, name: str = "deltas") -> np.ndarray:
    """Return ``deltas`` as a finite, non-empty 1-D float64 array."""
    arr = np.asarray(deltas, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size == 0:
        raise InvalidInputError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def check_sign(sign) -> int:
    if sign not in (1, -1):
        raise InvalidInputError(f"advantage sign must be +1 or -1, got {sign!r}")
    return int(sign)


def check_finite_scalar(x, name: str) -> float:
    x = float(x)
    if not np.isfinite(x):
        raise InvalidInputError(f"{name} must be finite, got {x}")
    return x
