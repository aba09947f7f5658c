"""Randomized self-checks of the numerical core against the reference oracles.

Each suite returns a :class:`CheckReport`; a build is healthy when every
report comes back with no failures.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from . import oracle
from ._validation import InvalidInputError
from .aggregation import ess_norm_at_p, power_mean_log
from .clipping import CLIP_MODES, ClipConfig
from .selection import EmaTracker, PBounds, SolverConfig, solve_p_ess_match
from .surrogate import GEOMETRIES, GeometryMode, SelectionContext, effective_ratio

SUITES = ("math", "solver", "gradients", "ess-curve")
FAULTS = ("sign",)

# spread of the synthetic deltas for the ess-curve export
VARIANCE_CLASSES = {"low": 0.05, "typical": 0.3, "high": 1.0}


@dataclass
class CheckReport:
    suite: str
    checked: int = 0
    failures: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def expect(self, condition: bool, message: Callable[[], str]) -> None:
        self.checked += 1
        if not condition:
            self.failures.append(message())


def _fmt(arr) -> str:
    return np.array2string(np.asarray(arr), precision=6, separator=", ", threshold=16)


def _random_deltas(rng, lo=1, hi=64, scale=None):
    n = int(rng.integers(lo, hi + 1))
    sigma = scale if scale is not None else float(rng.uniform(0.01, 2.0))
    return rng.normal(0.0, sigma, n)


def check_math(rng, cases: int) -> CheckReport:
    report = CheckReport("math")
    ps = np.array([0.0, 0.01, 0.25, 0.5, 0.99, 1.0, 2.0])
    for _ in range(cases):
        d = _random_deltas(rng)
        vals = np.array([power_mean_log(d, p) for p in ps])
        report.expect(np.all(np.diff(vals) >= -1e-12 * vals[1:]),
                      lambda: f"power mean not monotone in p: deltas={_fmt(d)} values={_fmt(vals)}")
        geo = math.exp(float(np.mean(d)))
        report.expect(abs(vals[0] - geo) <= 1e-12 * geo,
                      lambda: f"p=0 differs from geometric mean: deltas={_fmt(d)}")
        arith = float(np.mean(np.exp(d)))
        report.expect(abs(vals[5] - arith) <= 1e-12 * arith,
                      lambda: f"p=1 differs from arithmetic mean: deltas={_fmt(d)}")
        p = float(rng.uniform(0.01, 2.0))
        ref = oracle.precise_power_mean(d, p)
        got = power_mean_log(d, p)
        report.expect(abs(got - ref) <= 1e-12 * ref,
                      lambda: f"log-domain mismatch at p={p}: got {got!r}, want {ref!r}, deltas={_fmt(d)}")
        ess = ess_norm_at_p(d, p)
        report.expect(1.0 / d.size - 1e-15 <= ess <= 1.0,
                      lambda: f"ESS {ess} outside [1/n, 1] at p={p}: deltas={_fmt(d)}")
        const = np.full(d.size, d[0])
        cval = power_mean_log(const, p)
        report.expect(abs(cval - math.exp(d[0])) <= 1e-12 * math.exp(d[0]),
                      lambda: f"constant deltas not fixed: value {d[0]}, n={d.size}")
    return report


def check_solver(rng, cases: int, bounds: PBounds = PBounds(), solver: SolverConfig = SolverConfig()) -> CheckReport:
    report = CheckReport("solver")
    for _ in range(cases):
        d = _random_deltas(rng, lo=2)
        target = float(rng.uniform(1.0 / d.size, 1.0))
        sel = solve_p_ess_match(d, target, bounds, solver)
        grid = oracle.grid_solve_p(d, target, bounds)
        if bounds.p_min < sel.p < bounds.p_max:
            report.expect(abs(sel.achieved_ess - target) <= solver.tol,
                          lambda: f"ESS gap {sel.achieved_ess - target:.3e} at p={sel.p}: target={target}, deltas={_fmt(d)}")
        report.expect(abs(sel.p - grid) <= 1e-2,
                      lambda: f"solver p={sel.p} vs grid p={grid}: target={target}, deltas={_fmt(d)}")
        report.expect(sel.iterations <= 20,
                      lambda: f"{sel.iterations} iterations: target={target}, deltas={_fmt(d)}")
    flat = np.full(8, 0.3)
    sel = solve_p_ess_match(flat, 0.5, bounds, solver)
    report.expect(sel.p == bounds.p_max, lambda: f"constant deltas gave p={sel.p}, want p_max")
    d = rng.normal(0, 1, 16)
    sel = solve_p_ess_match(d, 1.0, bounds, solver)
    report.expect(sel.p == bounds.p_min, lambda: f"target 1 gave p={sel.p}, want p_min")
    return report


def _kink_distance(d, sign, mode, c) -> float:
    """Distance from ``d`` to the nearest point where the clipped map is not smooth."""
    if mode == "paper-max":
        return float(np.min(np.abs(sign * d + c)))
    if mode == "two-sided":
        return float(np.min(np.abs(np.abs(d) - c)))
    if mode == "sequence":
        return abs(sign * float(np.mean(d)) - c)
    return math.inf


def random_context(rng, n: int) -> SelectionContext:
    """A context whose trackers are past warmup, so heuristic selectors move off the midpoint."""
    return SelectionContext(
        step=int(rng.integers(0, 100)),
        total_steps=100,
        length=float(n),
        entropy=float(rng.uniform(0.0, 3.0)),
        length_tracker=EmaTracker(mean=float(rng.uniform(4, 40)), variance=float(rng.uniform(1, 100)), count=50),
        entropy_tracker=EmaTracker(mean=1.5, variance=float(rng.uniform(0.05, 1.0)), count=50),
        warmup=10,
    )


def gradient_case(rng, geometry: str, mode: str, c: float = 0.4, margin: float = 1e-4):
    """Draw one trajectory for the gradient comparison, away from clip kinks.

    Returns ``(deltas, advantage, result, context)``.
    """
    clip = ClipConfig(mode, c, 0.1)
    geo = GeometryMode(geometry, float(rng.uniform(0.0, 1.5)))
    while True:
        d = _random_deltas(rng, hi=32, scale=float(rng.uniform(0.05, 0.8)))
        if mode == "sequence" and rng.random() < 0.5:
            d = d + rng.choice([-1.0, 1.0]) * 0.6
        adv = float(rng.choice([-1.0, 1.0]) * rng.uniform(0.1, 2.0))
        sign = 1 if adv > 0 else -1
        if _kink_distance(d, sign, mode, c) > margin:
            break
    ctx = random_context(rng, d.size)
    res = effective_ratio(d, adv, geo, clip, context=ctx)
    return d, adv, res, ctx


def check_gradients(rng, cases: int, fault: Optional[str] = None) -> CheckReport:
    report = CheckReport("gradients")
    flip = -1.0 if fault == "sign" else 1.0
    for geometry in GEOMETRIES:
        for mode in CLIP_MODES:
            for _ in range(cases):
                d, adv, res, _ = gradient_case(rng, geometry, mode)
                analytic = flip * -adv * res.token_grad_weights
                fd = oracle.finite_difference_delta_grad(d, adv, res.p_used, mode, 0.4)
                err = np.max(np.abs(analytic - fd) / np.maximum(np.abs(fd), 1e-6))
                report.expect(err <= 1e-4, lambda: (
                    f"{geometry}/{mode}: relative error {err:.3e} at p={res.p_used}, "
                    f"A={adv}, deltas={_fmt(d)}"))
                masked = res.clipped.grad_mask == 0
                report.expect(np.all(analytic[masked] == 0.0) and np.all(fd[masked] == 0.0),
                              lambda: f"{geometry}/{mode}: clipped token with nonzero gradient, deltas={_fmt(d)}")
    return report


def ess_curve(seed: int = 0, n: int = 64, grid: Optional[np.ndarray] = None) -> Dict[str, np.ndarray]:
    """ESS as a function of p for one fixed delta draw per variance class."""
    grid = np.linspace(0.01, 4.0, 400) if grid is None else grid
    rng = np.random.default_rng(seed)
    curves = {"p": grid}
    for name, sigma in VARIANCE_CLASSES.items():
        d = rng.normal(0.0, sigma, n)
        curves[name] = np.array([ess_norm_at_p(d, p) for p in grid])
    return curves


def check_ess_curve(seed: int, out: Optional[Path] = None) -> CheckReport:
    report = CheckReport("ess-curve")
    curves = ess_curve(seed)
    for name in VARIANCE_CLASSES:
        ess = curves[name]
        report.expect(np.all(np.diff(ess) <= 1e-12),
                      lambda: f"{name}: ESS increases with p at p={curves['p'][int(np.argmax(np.diff(ess)))]:.3f}")
    if out is not None:
        write_ess_curve(curves, out)
    return report


def write_ess_curve(curves: Dict[str, np.ndarray], path) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["variance_class", "p", "ess_norm"])
            for name in VARIANCE_CLASSES:
                for p, e in zip(curves["p"], curves[name]):
                    writer.writerow([name, format(float(p), ".17g"), format(float(e), ".17g")])
    except OSError as exc:
        raise OSError(f"failed to write ESS curve to {path}: {exc}") from exc


def run_suite(suite: str, seed: int = 0, cases: int = 50, out=None, fault: Optional[str] = None) -> CheckReport:
    """Run one named suite. ``out`` is where ``ess-curve`` writes its CSV."""
    if suite not in SUITES:
        raise InvalidInputError(f"unknown suite {suite!r}; expected one of {SUITES}")
    if fault is not None and fault not in FAULTS:
        raise InvalidInputError(f"unknown fault {fault!r}")
    rng = np.random.default_rng(seed)
    if suite == "math":
        return check_math(rng, cases)
    if suite == "solver":
        return check_solver(rng, cases)
    if suite == "gradients":
        return check_gradients(rng, max(1, cases // 10), fault)
    return check_ess_curve(seed, out)
