"""Wall-clock benchmark of the assignment flow solve across grid sizes.

Instances mirror the networks the trainer produces: random class means,
random non-negative per-bit penalties, fixed sparsity. Each engine is warmed
up once before timing so JIT compilation never lands in a measurement.
"""

from __future__ import annotations

import time
from typing import NamedTuple, Sequence

import numpy as np

from ._accel import resolve_engine
from .codes import AssignmentProblem, DEFAULT_SCALE, build_flow_network
from .core import Rng
from .mincostflow import solve_mcf


class BenchPoint(NamedTuple):
    engine: str
    n_classes: int
    d: int
    k: int
    repeats: int
    mean_seconds: float


def random_problem(rng: Rng, n_classes: int, d: int, k: int) -> AssignmentProblem:
    means = rng.normal(size=(n_classes, d))
    lam = rng.uniform(0.0, 1.0, size=d)
    return AssignmentProblem(means, lam, k)


def bench_mcf(
    nc_list: Sequence[int],
    d_list: Sequence[int],
    repeats: int = 20,
    k: int = 2,
    seed: int = 0,
    engine: str = "auto",
) -> list[BenchPoint]:
    """Mean solve time per (n_c, d) grid point over `repeats` random instances."""
    engine = resolve_engine(engine)
    rng = Rng(seed)
    # Warm-up: compile/jit paths once outside the timed region.
    warm = build_flow_network(random_problem(rng, 2, max(4, 2 * k), k), DEFAULT_SCALE)
    solve_mcf(warm, engine=engine)
    points = []
    for n_classes in nc_list:
        for d in d_list:
            if d < k:
                continue
            nets = [
                build_flow_network(random_problem(rng, n_classes, d, k), DEFAULT_SCALE)
                for _ in range(repeats)
            ]
            start = time.perf_counter()
            for net in nets:
                solve_mcf(net, engine=engine)
            elapsed = time.perf_counter() - start
            points.append(
                BenchPoint(engine, n_classes, d, k, repeats, elapsed / repeats)
            )
    return points


def linear_fit_max_ratio(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Worst multiplicative deviation of (xs, ys) from its least-squares line.

    Returns inf when the fitted line is non-positive somewhere it is
    evaluated, which no linear-looking data produces.
    """
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    worst = 1.0
    for xi, yi in zip(x, y):
        fit = slope * xi + intercept
        if fit <= 0 or yi <= 0:
            return float("inf")
        worst = max(worst, yi / fit, fit / yi)
    return float(worst)


def bench_csv(points: Sequence[BenchPoint]) -> str:
    lines = ["engine,n_c,d,k,repeats,mean_seconds"]
    for p in points:
        lines.append(
            f"{p.engine},{p.n_classes},{p.d},{p.k},{p.repeats},{p.mean_seconds:.6g}"
        )
    return "\n".join(lines) + "\n"
