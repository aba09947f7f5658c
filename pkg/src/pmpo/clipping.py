"""Log-domain clipping of token deltas and the clip-fraction statistic."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import InvalidInputError, check_deltas, check_sign

CLIP_MODES = ("paper-max", "two-sided", "sequence", "none")


@dataclass(frozen=True)
class ClipConfig:
    """Clip mode, training clip range ``c`` (log units) and reliability threshold.

    ``eps_ess`` only feeds :func:`clip_fraction`; it never clips the
    training signal. Zero is allowed so every nonzero delta counts as
    saturated.
    """

    mode: str = "paper-max"
    c: float = 0.4
    eps_ess: float = 0.1

    def __post_init__(self):
        if self.mode not in CLIP_MODES:
            raise InvalidInputError(f"unknown clip mode {self.mode!r}; expected one of {CLIP_MODES}")
        if not self.c > 0:
            raise InvalidInputError(f"clip range c must be > 0, got {self.c}")
        if not self.eps_ess >= 0:
            raise InvalidInputError(f"eps_ess must be >= 0, got {self.eps_ess}")


@dataclass(frozen=True)
class ClippedDeltas:
    values: np.ndarray
    grad_mask: np.ndarray  # 1.0 where gradient passes, 0.0 on the constant branch


def clip_deltas(deltas, advantage_sign: int, config: ClipConfig) -> ClippedDeltas:
    """Clip ``deltas`` according to ``config.mode``.

    paper-max
        ``sign * max(sign * d, clip(sign * d, -c, c))``, which reduces to
        ``sign * max(sign * d, -c)``: only the sign-corrected lower side clips.
    two-sided
        symmetric ``clip(d, -c, c)``.
    sequence
        values untouched; the whole trajectory is gated to zero gradient when
        ``sign * mean(d) > c``.
    none
        identity.
    """
    d = check_deltas(deltas)
    s = check_sign(advantage_sign)
    c = config.c
    if config.mode == "paper-max":
        x = s * d
        values = s * np.maximum(x, np.clip(x, -c, c))
        mask = (x >= -c).astype(np.float64)
    elif config.mode == "two-sided":
        values = np.clip(d, -c, c)
        mask = (np.abs(d) <= c).astype(np.float64)
    elif config.mode == "sequence":
        values = d.copy()
        gated = s * np.mean(d) > c
        mask = np.full(d.size, 0.0 if gated else 1.0)
    else:
        values = d.copy()
        mask = np.ones(d.size)
    return ClippedDeltas(values=values, grad_mask=mask)


def clip_fraction(deltas, eps_ess: float) -> float:
    """Fraction of tokens with ``|delta| > eps_ess`` on the raw deltas."""
    d = check_deltas(deltas)
    if eps_ess < 0:
        raise InvalidInputError(f"eps_ess must be >= 0, got {eps_ess}")
    return float(np.count_nonzero(np.abs(d) > eps_ess)) / d.size
