"""Command-line entry point: ``pmpo train``, ``pmpo sweep`` and ``pmpo check``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import __version__
from ._validation import InvalidInputError
from .checks import FAULTS, SUITES, run_suite
from .clipping import CLIP_MODES
from .config import config_from_mapping, load_config
from .diagnostics import write_sink
from .surrogate import GEOMETRIES
from .toyrl.tasks import TASKS
from .toyrl.train import TrainConfig, TrainResult, train

logger = logging.getLogger("pmpo")

SWEEP_AXES = ("fixed-p", "eps-ess", "geometry")

# flags that override config keys of the same name
_OVERRIDES = ("seed", "geometry", "clip_mode", "p_fixed", "p_min", "p_max", "eps_ess", "clip_c", "total_steps", "task")


class CliError(Exception):
    pass


def _run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="flat YAML file of config keys")
    parser.add_argument("--out", type=Path, default=Path("pmpo-out"), help="output directory")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--geometry", choices=GEOMETRIES)
    parser.add_argument("--clip-mode", choices=CLIP_MODES)
    parser.add_argument("--p-fixed", type=float)
    parser.add_argument("--p-min", type=float)
    parser.add_argument("--p-max", type=float)
    parser.add_argument("--eps-ess", type=float)
    parser.add_argument("--clip-c", type=float)
    parser.add_argument("--total-steps", type=int)
    parser.add_argument("--task", choices=TASKS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pmpo", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run one training job")
    _run_options(p_train)

    p_sweep = sub.add_parser("sweep", help="one training job per value along an axis")
    _run_options(p_sweep)
    p_sweep.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p_sweep.add_argument("--values", nargs="*", default=[], help="values along the axis")

    p_check = sub.add_parser("check", help="randomized self-checks against the reference oracles")
    p_check.add_argument("suite", choices=SUITES)
    p_check.add_argument("--seed", type=int, default=0)
    p_check.add_argument("--cases", type=int, default=50)
    p_check.add_argument("--out", type=Path, default=Path("ess_curve.csv"), help="CSV path for ess-curve")
    p_check.add_argument("--inject-fault", choices=FAULTS, help=argparse.SUPPRESS)
    return parser


def resolve_config(args: argparse.Namespace) -> tuple:
    """Config file, then flag overrides. Returns ``(config, overrides, content_hash)``."""
    if args.config is not None:
        config, digest = load_config(args.config)
    else:
        config, digest = TrainConfig(), None
    overrides = {key: getattr(args, key) for key in _OVERRIDES if getattr(args, key) is not None}
    return config_from_mapping(overrides, config), overrides, digest


def run_one(config: TrainConfig, out: Path, overrides: Dict, digest: Optional[str], source: Optional[Path]) -> TrainResult:
    """Train and write ``metrics.csv``, ``metrics.jsonl`` and ``manifest.json`` into ``out``."""
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    result = train(config)
    aborted = result.aborted is not None
    write_sink(result.metrics, "csv", out / "metrics.csv", allow_nonfinite=aborted)
    write_sink(result.metrics, "jsonl", out / "metrics.jsonl", allow_nonfinite=aborted)
    manifest = {
        "config": dataclasses.asdict(config),
        "seed": config.seed,
        "config_file": str(source) if source is not None else None,
        "config_hash": digest,
        "overrides": overrides,
        "summary": result.summary,
        "version": __version__,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return result


def cmd_train(args) -> int:
    config, overrides, digest = resolve_config(args)
    result = run_one(config, args.out, overrides, digest, args.config)
    if result.aborted is not None:
        logger.error("run aborted at step %d", result.aborted["step"])
        return 1
    summary = result.summary
    print(f"{summary['steps']} steps, final mean reward {summary['final_mean_reward']}, wrote {args.out}")
    return 0


def _axis_overrides(axis: str, raw: str) -> Dict:
    if axis == "geometry":
        if raw not in GEOMETRIES:
            raise CliError(f"unknown geometry {raw!r} in sweep values")
        return {"geometry": raw}
    try:
        value = float(raw)
    except ValueError:
        raise CliError(f"sweep value {raw!r} is not a number") from None
    if axis == "fixed-p":
        return {"geometry": "pmpo-fixed", "p_fixed": value}
    return {"eps_ess": value}


def cmd_sweep(args) -> int:
    if not args.values:
        raise CliError("sweep needs at least one value")
    base, overrides, digest = resolve_config(args)
    rows: List[list] = []
    status = 0
    for raw in args.values:
        extra = _axis_overrides(args.axis, raw)
        config = config_from_mapping(extra, base)
        result = run_one(config, args.out / f"{args.axis}={raw}", {**overrides, **extra}, digest, args.config)
        summary = result.summary
        rows.append([raw, summary["final_mean_reward"], summary["final_p_mean"], summary["steps"],
                     int(result.aborted is not None)])
        if result.aborted is not None:
            logger.error("sub-run %s=%s aborted at step %d", args.axis, raw, result.aborted["step"])
            status = 1
    with (args.out / "summary.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["value", "final_mean_reward", "final_p_mean", "steps", "aborted"])
        for row in rows:
            writer.writerow(["" if v is None else (format(v, ".17g") if isinstance(v, float) else v) for v in row])
    print(f"{len(rows)} runs, summary at {args.out / 'summary.csv'}")
    return status


def cmd_check(args) -> int:
    report = run_suite(args.suite, seed=args.seed, cases=args.cases, out=args.out, fault=args.inject_fault)
    for failure in report.failures:
        print(f"FAIL {failure}")
    verdict = "ok" if report.ok else f"{len(report.failures)} failed"
    print(f"{report.suite}: {report.checked} checks, {verdict}")
    if args.suite == "ess-curve":
        print(f"wrote {args.out}")
    return 0 if report.ok else 1


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    handler = {"train": cmd_train, "sweep": cmd_sweep, "check": cmd_check}[args.command]
    try:
        return handler(args)
    except (CliError, InvalidInputError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
