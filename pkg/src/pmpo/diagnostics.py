"""Per-step training metrics and their CSV / JSONL sinks."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Iterable, List, Sequence

import numpy as np

from ._validation import InvalidInputError


@dataclass(frozen=True)
class MetricsRecord:
    step: int
    mean_reward: float
    mean_entropy: float
    grad_norm: float
    p_mean: float
    p_max: float
    f_clip_mean: float
    target_ess_mean: float
    achieved_ess_mean: float
    delta_abs_mean: float
    ratio_max: float
    loss: float

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in astuple(self))


FIELDS = tuple(f.name for f in fields(MetricsRecord))


def record(
    step: int,
    results: Sequence,
    *,
    mean_reward: float,
    mean_entropy: float,
    grad_norm: float,
    loss: float,
) -> MetricsRecord:
    """Reduce per-trajectory surrogate results into one row.

    Means everywhere except ``p_max`` and ``ratio_max``, which take the
    maximum. ``delta_abs_mean`` is token-weighted.
    """
    if not results:
        raise InvalidInputError("cannot record metrics for an empty batch")
    p = np.array([r.p_used for r in results])
    sel = [r.selection for r in results]
    n = np.array([r.n for r in results], dtype=np.float64)
    abs_means = np.array([r.delta_abs_mean for r in results])
    return MetricsRecord(
        step=int(step),
        mean_reward=float(mean_reward),
        mean_entropy=float(mean_entropy),
        grad_norm=float(grad_norm),
        # a mean lies within [min, max]; clamp away summation rounding
        p_mean=float(np.clip(math.fsum(p) / p.size, p.min(), p.max())),
        p_max=float(np.max(p)),
        f_clip_mean=float(np.mean([s.f_clip for s in sel])),
        target_ess_mean=float(np.mean([s.target_ess for s in sel])),
        achieved_ess_mean=float(np.mean([s.achieved_ess for s in sel])),
        delta_abs_mean=float(np.sum(abs_means * n) / np.sum(n)),
        ratio_max=float(max(r.ratio_max for r in results)),
        loss=float(loss),
    )


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return format(float(value), ".17g")


def write_sink(records: Iterable[MetricsRecord], format: str, path, allow_nonfinite: bool = False) -> None:
    """Write ``records`` as CSV (fixed header) or JSONL, 17 significant digits.

    Non-finite values are refused unless ``allow_nonfinite`` marks an
    aborted run.
    """
    records = list(records)
    if not allow_nonfinite:
        for r in records:
            if not r.is_finite():
                raise InvalidInputError(f"non-finite metric at step {r.step}; run not marked aborted")
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            if format == "csv":
                fh.write(",".join(FIELDS) + "\n")
                for r in records:
                    fh.write(",".join(_fmt(v) for v in astuple(r)) + "\n")
            elif format == "jsonl":
                for r in records:
                    # hand-built so every float carries exactly the .17g text
                    body = ", ".join(f'"{k}": {_json_num(v)}' for k, v in zip(FIELDS, astuple(r)))
                    fh.write("{" + body + "}\n")
            else:
                raise InvalidInputError(f"unknown sink format {format!r}")
    except OSError as exc:
        raise OSError(f"failed to write metrics to {path}: {exc}") from exc


def _json_num(v) -> str:
    if isinstance(v, float) and not math.isfinite(v):
        return json.dumps(v)  # NaN / Infinity, only reachable for aborted runs
    return _fmt(v)


def read_sink(format: str, path) -> List[MetricsRecord]:
    path = Path(path)
    out = []
    with path.open(newline="") as fh:
        if format == "csv":
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != FIELDS:
                raise InvalidInputError(f"unexpected CSV header in {path}: {header}")
            rows = [dict(zip(header, row)) for row in reader]
        elif format == "jsonl":
            rows = [json.loads(line) for line in fh if line.strip()]
        else:
            raise InvalidInputError(f"unknown sink format {format!r}")
    for row in rows:
        out.append(MetricsRecord(int(row["step"]), *(float(row[k]) for k in FIELDS[1:])))
    return out
