"""Slow, direct reference implementations used only for cross-checking.

Nothing here is imported by the training path. The formulas are written
out independently of :mod:`pmpo.aggregation` and friends (no log-domain
tricks, no shared helpers) so agreement means something.
"""

from __future__ import annotations

from typing import Dict, Optional, Sequence

import mpmath
import numpy as np

from ._validation import InvalidInputError


def naive_power_mean(ratios, p: float, normalized: bool = True) -> float:
    """``(sum r**p / n) ** (1/p)`` evaluated literally; overflow raises."""
    r = np.asarray(ratios, dtype=np.float64)
    if r.size == 0 or np.any(r <= 0):
        raise InvalidInputError("ratios must be a non-empty positive vector")
    if p == 0:
        raise InvalidInputError("the direct formula is undefined at p = 0; use naive_geometric_mean")
    with np.errstate(over="raise", invalid="raise", divide="raise"):
        try:
            s = np.sum(r**p)
            if normalized:
                s = s / r.size
            out = s ** (1.0 / p)
        except FloatingPointError as exc:
            raise OverflowError(f"direct power mean overflowed at p={p}") from exc
    if not np.isfinite(out):
        raise OverflowError(f"direct power mean overflowed at p={p}")
    return float(out)


def naive_geometric_mean(ratios, normalized: bool = True) -> float:
    r = np.asarray(ratios, dtype=np.float64)
    prod = np.prod(r)
    return float(prod ** (1.0 / r.size)) if normalized else float(prod)


def precise_power_mean(deltas, p, normalized: bool = True, dps: int = 50) -> float:
    """Power mean of ``exp(deltas)`` in mpmath extended precision."""
    with mpmath.workdps(dps):
        p = mpmath.mpf(p)
        terms = [mpmath.e ** (p * mpmath.mpf(float(d))) for d in deltas]
        s = mpmath.fsum(terms)
        if normalized:
            s /= len(terms)
        return float(s ** (1 / p))


def precise_softmax(deltas, p, dps: int = 50) -> np.ndarray:
    with mpmath.workdps(dps):
        e = [mpmath.e ** (mpmath.mpf(p) * mpmath.mpf(float(d))) for d in deltas]
        s = mpmath.fsum(e)
        return np.array([float(x / s) for x in e])


def direct_ess_norm(deltas, p: float) -> float:
    """``(sum w)^2 / (n sum w^2)`` with ``w = exp(p * (d - max d))``."""
    d = np.asarray(deltas, dtype=np.float64)
    w = np.exp(p * (d - d.max()))
    return float(np.sum(w) ** 2 / (d.size * np.sum(w**2)))


def grid_solve_p(deltas, target: float, bounds=(0.01, 0.99), resolution: float = 1e-3) -> float:
    """Exhaustive scan for ``argmin_p |ESS(p) - target|``; ties go to the larger ``p``."""
    if resolution > 1e-3:
        raise InvalidInputError("grid resolution must be <= 1e-3")
    p_min, p_max = (bounds.p_min, bounds.p_max) if hasattr(bounds, "p_min") else bounds
    count = int(round((p_max - p_min) / resolution)) + 1
    grid = np.linspace(p_min, p_max, count)
    gaps = np.array([abs(direct_ess_norm(deltas, p) - target) for p in grid])
    # scan from the top so the first minimum found is the largest p
    idx = len(grid) - 1 - int(np.argmin(gaps[::-1]))
    return float(grid[idx])


def naive_clip(deltas, sign: int, mode: str, c: float):
    """Clipped values and gradient mask, written straight from the case definitions."""
    d = np.asarray(deltas, dtype=np.float64)
    vals = d.copy()
    mask = np.ones(d.size)
    for t, x in enumerate(d):
        if mode == "paper-max":
            sx = sign * x
            clipped = min(max(sx, -c), c)
            vals[t] = sign * max(sx, clipped)
            if sx < -c:
                mask[t] = 0.0
        elif mode == "two-sided":
            if x > c:
                vals[t], mask[t] = c, 0.0
            elif x < -c:
                vals[t], mask[t] = -c, 0.0
    if mode == "sequence" and sign * d.mean() > c:
        mask[:] = 0.0
    return vals, mask


def surrogate_value(deltas, advantage: float, p: float, mode: str, c: float, normalized: bool = True) -> float:
    """``-A * r_hat`` with ``p`` held fixed. Ignores the gradient mask."""
    sign = 1 if advantage > 0 else -1
    vals, _ = naive_clip(deltas, sign, mode, c)
    ratios = np.exp(vals)
    if abs(p) < 1e-6:
        r_hat = naive_geometric_mean(ratios, normalized)
    else:
        r_hat = naive_power_mean(ratios, p, normalized)
    return -advantage * r_hat


def finite_difference_delta_grad(
    deltas, advantage: float, p: float, mode: str, c: float, normalized: bool = True, epsilon: float = 1e-5
) -> np.ndarray:
    """Central differences of ``-A * r_hat`` w.r.t. each delta.

    Tokens on the constant (clipped) branch are held at their unperturbed
    value, and a gated sequence contributes nothing, which is what a
    stop-gradient on the clipped branch means.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise InvalidInputError("epsilon must lie in [1e-7, 1e-3]")
    d = np.asarray(deltas, dtype=np.float64)
    sign = 1 if advantage > 0 else -1
    _, mask = naive_clip(d, sign, mode, c)
    grad = np.zeros(d.size)
    for j in range(d.size):
        if mask[j] == 0.0:
            continue
        e = np.zeros(d.size)
        e[j] = epsilon
        f_plus = surrogate_value(d + e, advantage, p, mode, c, normalized)
        f_minus = surrogate_value(d - e, advantage, p, mode, c, normalized)
        grad[j] = (f_plus - f_minus) / (2 * epsilon)
    return grad


def _naive_batch_loss(tables, batch, rows, p_values, mode, c, normalized, frozen_mask):
    prev_t, pos_t, prompt_t = tables
    T = batch.tokens.shape[1]
    total = 0.0
    for b in rows:
        adv = batch.advantages[b]
        if adv == 0.0:
            continue
        toks = batch.tokens[b]
        new_lp = np.empty(T)
        prev = 0
        for t in range(T):
            logits = prev_t[prev] + pos_t[t] + prompt_t[batch.prompt_ids[b]]
            m = logits.max()
            new_lp[t] = logits[toks[t]] - (m + np.log(np.sum(np.exp(logits - m))))
            prev = toks[t]
        d = (new_lp - batch.old_logprobs[b])[batch.mask[b]]
        base_d, mask = frozen_mask[int(b)]
        # constant branch: frozen tokens keep their unperturbed delta
        d = np.where(mask == 1.0, d, base_d)
        total += surrogate_value(d, adv, p_values[int(b)], mode, c, normalized)
    return total / len(rows)


def finite_difference_loss_grad(
    config,
    params,
    batch,
    p_values: Dict[int, float],
    rows: Optional[Sequence[int]] = None,
    epsilon: float = 1e-5,
):
    """Central-difference gradient of the minibatch loss w.r.t. every policy parameter.

    ``p_values`` maps trajectory row to the exponent chosen at the
    unperturbed point; it is held fixed under perturbation. Returns arrays
    shaped like ``params.arrays()``.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise InvalidInputError("epsilon must lie in [1e-7, 1e-3]")
    rows = np.arange(batch.size) if rows is None else np.asarray(rows)
    tables = [a.copy() for a in params.arrays()]
    mode, c, normalized = config.clip_mode, config.clip_c, config.length_normalized

    frozen = {}
    for b in rows:
        if batch.advantages[b] == 0.0:
            continue
        # unperturbed deltas and clip activity
        lp = []
        prev = 0
        for t in range(batch.tokens.shape[1]):
            logits = tables[0][prev] + tables[1][t] + tables[2][batch.prompt_ids[b]]
            m = logits.max()
            lp.append(logits[batch.tokens[b, t]] - (m + np.log(np.sum(np.exp(logits - m)))))
            prev = batch.tokens[b, t]
        d0 = (np.array(lp) - batch.old_logprobs[b])[batch.mask[b]]
        sign = 1 if batch.advantages[b] > 0 else -1
        _, mask = naive_clip(d0, sign, mode, c)
        frozen[int(b)] = (d0, mask)

    grads = [np.zeros_like(a) for a in tables]
    for k, arr in enumerate(tables):
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + epsilon
            f_plus = _naive_batch_loss(tables, batch, rows, p_values, mode, c, normalized, frozen)
            arr[idx] = orig - epsilon
            f_minus = _naive_batch_loss(tables, batch, rows, p_values, mode, c, normalized, frozen)
            arr[idx] = orig
            grads[k][idx] = (f_plus - f_minus) / (2 * epsilon)
    return grads
