"""Hash-code assignment.

Per-item codes take the k largest embedding coordinates. Class-level codes
minimize an objective with a unary reward for large class-mean coordinates
plus a quadratic penalty for bit collisions across classes; that discrete
problem is solved exactly by reduction to integer min-cost flow on a layered
network (source -> class nodes -> bit nodes -> sink, with the collision
penalty unrolled into parallel sink edges of increasing cost).

Real-valued costs are scaled by an integer factor and rounded half-to-even so
the flow solver stays exact; ``scaled_assignment_cost`` evaluates the same
integer objective directly and is the reference the solver's total cost must
match bit-for-bit.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    EmbeddingSet,
    HashCode,
    ValidationError,
    as_float_matrix,
    as_float_vector,
    class_means,
)
from .mincostflow import COST_BUDGET, CostOverflowError, FlowNetwork, solve_mcf

DEFAULT_SCALE = 10**6

# Refuse brute-force enumeration beyond this many configurations.
BRUTE_FORCE_LIMIT = 4_000_000


@dataclass(frozen=True)
class AssignmentProblem:
    """Class means (n_c x d), per-bit penalties lam (d,), and sparsity k."""

    means: np.ndarray
    lam: np.ndarray
    k: int

    def __post_init__(self):
        means = as_float_matrix(self.means, "means")
        lam = as_float_vector(self.lam, "lam")
        k = int(self.k)
        if lam.shape[0] != means.shape[1]:
            raise ValidationError(f"lam length {lam.shape[0]} != d {means.shape[1]}")
        if (lam < 0).any():
            raise ValidationError("lam entries must be non-negative")
        if not 1 <= k <= means.shape[1]:
            raise ValidationError(f"need 1 <= k <= d, got k={k}, d={means.shape[1]}")
        means.setflags(write=False)
        lam = lam.copy()
        lam.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "k", k)

    @property
    def n_classes(self) -> int:
        return self.means.shape[0]

    @property
    def d(self) -> int:
        return self.means.shape[1]


@dataclass(frozen=True)
class AssignmentSolution:
    codes: tuple[HashCode, ...]
    objective: float
    scaled_cost: int


def topk_hash(embedding, k: int) -> HashCode:
    """Code with the k largest coordinates set; ties go to the lower index."""
    f = as_float_vector(embedding, "embedding")
    if not 1 <= k <= f.shape[0]:
        raise ValidationError(f"need 1 <= k <= d, got k={k}, d={f.shape[0]}")
    order = np.argsort(-f, kind="stable")
    return HashCode(tuple(sorted(int(q) for q in order[:k])), f.shape[0])


def scaled_cost_tables(p: AssignmentProblem, scale: int) -> tuple[np.ndarray, np.ndarray]:
    """Integer cost tables for the flow reduction.

    unary[i, q] is the (negative-reward) cost of class i taking bit q;
    sink[q, r] is the cost of the r-th parallel bit->sink edge, i.e. the
    marginal penalty of the (r+1)-th class landing on bit q.
    """
    scale = int(scale)
    if scale < 1:
        raise ValidationError(f"scale must be a positive integer, got {scale}")
    unary_f = np.rint(-p.means * scale)
    r = np.arange(p.n_classes, dtype=np.float64)
    sink_f = np.rint(2.0 * p.lam[:, None] * r[None, :] * scale)
    limit = float(COST_BUDGET)
    if np.abs(unary_f).max(initial=0.0) >= limit or np.abs(sink_f).max(initial=0.0) >= limit:
        raise CostOverflowError("scaled cost magnitude exceeds the safe integer budget")
    return unary_f.astype(np.int64), sink_f.astype(np.int64)


def build_flow_network(p: AssignmentProblem, scale: int = DEFAULT_SCALE) -> FlowNetwork:
    """Layered network whose min-cost flow solves the class assignment.

    Nodes: source 0, class nodes 1..n_c, bit nodes n_c+1..n_c+d, sink last.
    Edge order: n_c source edges (cap k, cost 0); n_c*d class->bit edges in
    class-major order (cap 1, cost unary[i, q]); d*n_c parallel bit->sink
    edges in bit-major order (cap 1, cost sink[q, r]). Required flow n_c*k.
    """
    unary, sink_costs = scaled_cost_tables(p, scale)
    nc, d, k = p.n_classes, p.d, p.k
    source = 0
    sink = 1 + nc + d
    edges: list[tuple[int, int, int, int]] = []
    for i in range(nc):
        edges.append((source, 1 + i, k, 0))
    for i in range(nc):
        for q in range(d):
            edges.append((1 + i, 1 + nc + q, 1, int(unary[i, q])))
    for q in range(d):
        for r in range(nc):
            edges.append((1 + nc + q, sink, 1, int(sink_costs[q, r])))
    net = FlowNetwork.from_edges(2 + nc + d, edges, source, sink, nc * k)
    # Surface an overflow now rather than from inside the solver.
    budget = int(np.abs(unary).sum()) + int(np.abs(sink_costs).sum())
    if budget >= COST_BUDGET:
        raise CostOverflowError("scaled cost budget exceeds the safe integer limit")
    return net


def middle_edge_index(p: AssignmentProblem, class_i: int, bit_q: int) -> int:
    """Index of the class->bit edge in the network's edge order."""
    return p.n_classes + class_i * p.d + bit_q


def assignment_objective(p: AssignmentProblem, codes: Sequence[HashCode]) -> float:
    """Real-valued objective: -sum_i means_i . z_i + sum_q lam_q * y_q * (y_q - 1).

    The second term equals the double sum of z_i^T diag(lam) z_j over ordered
    pairs of distinct classes (y_q counts classes using bit q).
    """
    _check_codes(p, codes)
    unary = 0.0
    y = np.zeros(p.d, dtype=np.int64)
    for i, code in enumerate(codes):
        unary -= float(p.means[i, list(code.bits)].sum())
        y[list(code.bits)] += 1
    pairwise = float((p.lam * y * (y - 1)).sum())
    return unary + pairwise


def scaled_assignment_cost(
    p: AssignmentProblem, codes: Sequence[HashCode], scale: int = DEFAULT_SCALE
) -> int:
    """Integer objective under the same rounded cost tables the solver uses."""
    _check_codes(p, codes)
    unary, sink_costs = scaled_cost_tables(p, scale)
    total = 0
    y = np.zeros(p.d, dtype=np.int64)
    for i, code in enumerate(codes):
        for q in code.bits:
            total += int(unary[i, q])
            y[q] += 1
    for q in range(p.d):
        total += int(sink_costs[q, : y[q]].sum())
    return total


def _check_codes(p: AssignmentProblem, codes: Sequence[HashCode]) -> None:
    if len(codes) != p.n_classes:
        raise ValidationError(f"expected {p.n_classes} codes, got {len(codes)}")
    for code in codes:
        if code.d != p.d or code.k != p.k:
            raise ValidationError(
                f"code (d={code.d}, k={code.k}) does not match problem (d={p.d}, k={p.k})"
            )


def solve_assignment(
    p: AssignmentProblem, scale: int = DEFAULT_SCALE, engine: str = "auto"
) -> AssignmentSolution:
    """Exact class-level code assignment via the flow reduction.

    The returned codes minimize the scaled integer objective; ``objective``
    re-evaluates them in real arithmetic.
    """
    if p.k == p.d:
        # Every code is forced to all-ones; no solver needed.
        codes = tuple(HashCode(tuple(range(p.d)), p.d) for _ in range(p.n_classes))
        return AssignmentSolution(
            codes, assignment_objective(p, codes), scaled_assignment_cost(p, codes, scale)
        )
    net = build_flow_network(p, scale)
    sol = solve_mcf(net, engine=engine)
    if sol.status != "optimal":
        raise ValidationError("assignment network unexpectedly infeasible")
    codes = []
    for i in range(p.n_classes):
        base = p.n_classes + i * p.d
        flows = sol.flow_per_edge[base : base + p.d]
        codes.append(HashCode(tuple(int(q) for q in np.nonzero(flows)[0]), p.d))
    codes = tuple(codes)
    return AssignmentSolution(codes, assignment_objective(p, codes), int(sol.total_cost))


def enumerate_codes(d: int, k: int) -> list[HashCode]:
    return [HashCode(bits, d) for bits in itertools.combinations(range(d), k)]


def brute_force_assignment(
    p: AssignmentProblem, scale: int = DEFAULT_SCALE
) -> tuple[tuple[HashCode, ...], int]:
    """Exhaustive minimum of the scaled integer objective over all configurations.

    Oracle for the flow reduction; first configuration in lexicographic order
    wins ties. Only viable for small instances.
    """
    combos = list(itertools.combinations(range(p.d), p.k))
    n_combo = len(combos)
    if n_combo**p.n_classes > BRUTE_FORCE_LIMIT:
        raise ValidationError(
            f"{n_combo}^{p.n_classes} configurations exceed the brute-force limit"
        )
    unary, sink_costs = scaled_cost_tables(p, scale)
    combo_mask = np.zeros((n_combo, p.d), dtype=np.int64)
    for j, bits in enumerate(combos):
        combo_mask[j, list(bits)] = 1
    # unary_choice[i, j]: cost of class i taking combination j.
    unary_choice = unary @ combo_mask.T
    sink_prefix = np.zeros((p.d, p.n_classes + 1), dtype=np.int64)
    np.cumsum(sink_costs, axis=1, out=sink_prefix[:, 1:])
    idx = np.array(
        list(itertools.product(range(n_combo), repeat=p.n_classes)), dtype=np.int64
    )
    total = np.zeros(idx.shape[0], dtype=np.int64)
    y = np.zeros((idx.shape[0], p.d), dtype=np.int64)
    for i in range(p.n_classes):
        total += unary_choice[i, idx[:, i]]
        y += combo_mask[idx[:, i]]
    total += sink_prefix[np.arange(p.d)[None, :], y].sum(axis=1)
    best = int(np.argmin(total))
    codes = tuple(HashCode(combos[j], p.d) for j in idx[best])
    return codes, int(total[best])


def expand_class_codes(
    class_codes: Sequence[HashCode], labels: Sequence[int]
) -> tuple[HashCode, ...]:
    """Give every item the code of its class; labels must be canonical."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1:
        raise ValidationError("labels must be 1-d")
    if labels.size and (labels.min() < 0 or labels.max() >= len(class_codes)):
        raise ValidationError(
            f"label out of range 0..{len(class_codes) - 1}: "
            f"[{labels.min()}, {labels.max()}]"
        )
    return tuple(class_codes[c] for c in labels.tolist())


def eval_objective_g(e: EmbeddingSet, codes: Sequence[HashCode], lam) -> float:
    """Item-level objective: -sum_i f_i . h_i plus cross-class collision penalty.

    The pairwise part sums h_i^T diag(lam) h_j over all ordered item pairs
    with different labels.
    """
    lam = as_float_vector(lam, "lam")
    if len(codes) != e.n:
        raise ValidationError(f"expected {e.n} codes, got {len(codes)}")
    if lam.shape[0] != e.d:
        raise ValidationError(f"lam length {lam.shape[0]} != d {e.d}")
    unary = 0.0
    counts = np.zeros((e.num_classes, e.d), dtype=np.int64)
    for i, code in enumerate(codes):
        if code.d != e.d:
            raise ValidationError(f"code {i} has d={code.d}, expected {e.d}")
        bits = list(code.bits)
        unary -= float(e.data[i, bits].sum())
        counts[e.labels[i], bits] += 1
    totals = counts.sum(axis=0)
    cross = totals[None, :] - counts  # for each class: bit usage by other classes
    pairwise = float((lam[None, :] * counts * cross).sum())
    return unary + pairwise


def eval_bound_gap_M(e: EmbeddingSet, k: int) -> float:
    """Total k-largest-coordinate mass of the deviations from class means.

    Non-negative by construction (each item's best-k sum of c - f is at least
    the k/d fraction of its coordinate total, and those totals cancel within a
    class); tiny negative floating-point residue is clamped to zero.
    """
    means = class_means(e)
    if not 1 <= k <= e.d:
        raise ValidationError(f"need 1 <= k <= d, got k={k}, d={e.d}")
    total = 0.0
    mass = 0.0
    for i in range(e.n):
        dev = means[e.labels[i]] - e.data[i]
        if k == e.d:
            total += float(dev.sum())
        else:
            total += float(np.partition(dev, e.d - k)[e.d - k :].sum())
        mass += float(np.abs(dev).sum())
    tol = 64.0 * np.finfo(np.float64).eps * (1.0 + mass)
    if total < -tol:
        raise AssertionError(f"bound gap {total} is negative beyond roundoff")
    return max(total, 0.0)


def eval_upper_bound_g(e: EmbeddingSet, codes: Sequence[HashCode], lam) -> float:
    """Class-mean relaxation of the item objective plus the bound gap.

    Upper-bounds ``eval_objective_g`` for any per-class codes expanded to
    items.
    """
    lam = as_float_vector(lam, "lam")
    means = class_means(e)
    if len(codes) != e.n:
        raise ValidationError(f"expected {e.n} codes, got {len(codes)}")
    unary = 0.0
    counts = np.zeros((e.num_classes, e.d), dtype=np.int64)
    for i, code in enumerate(codes):
        bits = list(code.bits)
        unary -= float(means[e.labels[i], bits].sum())
        counts[e.labels[i], bits] += 1
    totals = counts.sum(axis=0)
    cross = totals[None, :] - counts
    pairwise = float((lam[None, :] * counts * cross).sum())
    k = codes[0].k
    return unary + pairwise + eval_bound_gap_M(e, k)


def default_lambda(means: np.ndarray, factor: float = 0.5) -> np.ndarray:
    """Uniform per-bit penalty at ``factor`` times the mean |class-mean entry|."""
    means = as_float_matrix(means, "means")
    return np.full(means.shape[1], factor * float(np.abs(means).mean()))


def assign_class_codes(
    e: EmbeddingSet,
    k: int,
    lam=None,
    scale: int = DEFAULT_SCALE,
    engine: str = "auto",
) -> tuple[AssignmentSolution, np.ndarray]:
    """Class codes for a whole embedding set; lam=None uses the default rule.

    Returns the solution plus the lam vector that was used.
    """
    means = class_means(e)
    if lam is None:
        lam_vec = default_lambda(means)
    elif np.isscalar(lam):
        lam_vec = np.full(e.d, float(lam))
    else:
        lam_vec = as_float_vector(lam, "lam")
    problem = AssignmentProblem(means, lam_vec, k)
    return solve_assignment(problem, scale=scale, engine=engine), lam_vec
