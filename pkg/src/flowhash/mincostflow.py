"""Exact integer minimum-cost flow on directed graphs with parallel edges.

Successive shortest augmenting paths with node potentials: one Bellman-Ford
pass bootstraps the potentials when negative edge costs are present, then
every augmentation runs Dijkstra on reduced costs. All arithmetic is int64
and the result is bit-identical across runs and engines.

Scope: networks must not contain a negative-cost directed cycle (detected and
rejected). The bipartite assignment networks this package builds are acyclic,
so the restriction never binds there.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ._accel import resolve_engine
from ._mcfkernel import (
    STATUS_INFEASIBLE,
    STATUS_NEGATIVE_CYCLE,
    STATUS_OPTIMAL,
    ssp_numba,
    ssp_python,
)
from .core import ValidationError

# Keep |cost| * capacity sums comfortably inside int64.
COST_BUDGET = 1 << 61


class CostOverflowError(OverflowError):
    """Total |cost|*capacity budget would overflow 64-bit accumulation."""


@dataclass(frozen=True)
class FlowNetwork:
    """Directed graph with integer capacities/costs and a required s->t flow value."""

    node_count: int
    edge_from: np.ndarray
    edge_to: np.ndarray
    capacity: np.ndarray
    cost: np.ndarray
    source: int
    sink: int
    required_flow: int

    def __post_init__(self):
        n = int(self.node_count)
        ef = np.asarray(self.edge_from, dtype=np.int64)
        et = np.asarray(self.edge_to, dtype=np.int64)
        cap = np.asarray(self.capacity, dtype=np.int64)
        cost = np.asarray(self.cost, dtype=np.int64)
        if not (ef.ndim == et.ndim == cap.ndim == cost.ndim == 1):
            raise ValidationError("edge arrays must be 1-d")
        if not (ef.size == et.size == cap.size == cost.size):
            raise ValidationError("edge arrays must have equal length")
        if n < 2:
            raise ValidationError("network needs at least source and sink nodes")
        src, snk = int(self.source), int(self.sink)
        if not (0 <= src < n and 0 <= snk < n):
            raise ValidationError("source/sink out of range")
        if src == snk:
            raise ValidationError("source and sink must differ")
        if ef.size:
            if ef.min() < 0 or et.min() < 0 or ef.max() >= n or et.max() >= n:
                raise ValidationError("edge endpoint out of range")
            if (ef == et).any():
                raise ValidationError("self-loops are not allowed")
            if (cap < 0).any():
                raise ValidationError("capacities must be non-negative")
        req = int(self.required_flow)
        if req < 0:
            raise ValidationError("required_flow must be non-negative")
        source_cap = int(cap[ef == src].sum()) if ef.size else 0
        if req > source_cap:
            raise ValidationError(
                f"required_flow {req} exceeds source out-capacity {source_cap}"
            )
        for arr in (ef, et, cap, cost):
            arr.setflags(write=False)
        object.__setattr__(self, "node_count", n)
        object.__setattr__(self, "edge_from", ef)
        object.__setattr__(self, "edge_to", et)
        object.__setattr__(self, "capacity", cap)
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "source", src)
        object.__setattr__(self, "sink", snk)
        object.__setattr__(self, "required_flow", req)

    @classmethod
    def from_edges(
        cls,
        node_count: int,
        edges: Iterable[tuple[int, int, int, int]],
        source: int,
        sink: int,
        required_flow: int,
    ) -> "FlowNetwork":
        """Build from an iterable of (from, to, capacity, cost) tuples."""
        edge_list = list(edges)
        ef = np.array([e[0] for e in edge_list], dtype=np.int64)
        et = np.array([e[1] for e in edge_list], dtype=np.int64)
        cap = np.array([e[2] for e in edge_list], dtype=np.int64)
        cost = np.array([e[3] for e in edge_list], dtype=np.int64)
        return cls(node_count, ef, et, cap, cost, source, sink, required_flow)

    @property
    def edge_count(self) -> int:
        return self.edge_from.size

    def edges(self) -> list[tuple[int, int, int, int]]:
        return list(
            zip(
                self.edge_from.tolist(),
                self.edge_to.tolist(),
                self.capacity.tolist(),
                self.cost.tolist(),
            )
        )

    def to_text(self) -> str:
        """Debug dump: header line, then one `from to cap cost` line per edge."""
        lines = [
            f"# nodes={self.node_count} source={self.source} "
            f"sink={self.sink} required={self.required_flow}"
        ]
        for f, t, c, w in self.edges():
            lines.append(f"{f} {t} {c} {w}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "FlowNetwork":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("#"):
            raise ValidationError("network dump must start with a '# nodes=...' header")
        fields = dict(
            part.split("=", 1) for part in lines[0].lstrip("# ").split() if "=" in part
        )
        try:
            header = {k: int(v) for k, v in fields.items()}
            edges = [tuple(int(x) for x in ln.split()) for ln in lines[1:]]
        except ValueError as exc:
            raise ValidationError(f"malformed network dump: {exc}") from exc
        if any(len(e) != 4 for e in edges):
            raise ValidationError("each edge line must have 4 integers: from to cap cost")
        return cls.from_edges(
            header["nodes"], edges, header["source"], header["sink"], header["required"]
        )


@dataclass(frozen=True)
class FlowSolution:
    """Per-edge flows (input edge order), total cost, and solve status."""

    flow_per_edge: np.ndarray
    total_cost: int
    status: str  # "optimal" or "infeasible"

    def __post_init__(self):
        flows = np.asarray(self.flow_per_edge, dtype=np.int64)
        flows.setflags(write=False)
        object.__setattr__(self, "flow_per_edge", flows)
        object.__setattr__(self, "total_cost", int(self.total_cost))


def check_cost_budget(net: FlowNetwork) -> None:
    budget = sum(
        abs(int(c)) * int(u) for c, u in zip(net.cost.tolist(), net.capacity.tolist())
    )
    if budget >= COST_BUDGET:
        raise CostOverflowError(
            f"|cost|*capacity budget {budget} exceeds the safe int64 limit {COST_BUDGET}"
        )


def solve_mcf(net: FlowNetwork, engine: str = "auto") -> FlowSolution:
    """Minimum-cost flow of value ``required_flow`` from source to sink.

    Returns status "optimal" with the cost-minimal feasible flow, or
    "infeasible" (zero flows) when no feasible flow of that value exists.
    """
    check_cost_budget(net)
    kernel = ssp_numba if resolve_engine(engine) == "numba" else ssp_python
    status, flows, total = kernel(
        net.node_count,
        net.edge_from,
        net.edge_to,
        net.capacity,
        net.cost,
        net.source,
        net.sink,
        net.required_flow,
    )
    if status == STATUS_NEGATIVE_CYCLE:
        raise ValidationError("network contains a negative-cost cycle (unsupported)")
    if status == STATUS_INFEASIBLE:
        return FlowSolution(np.zeros(net.edge_count, np.int64), 0, "infeasible")
    assert status == STATUS_OPTIMAL
    return FlowSolution(flows, int(total), "optimal")


def check_feasibility(
    net: FlowNetwork, flow: Sequence[int]
) -> tuple[bool, list[str]]:
    """Validate capacity bounds, conservation, and the source flow value.

    Returns (ok, violations); violations lists one human-readable line per
    failed constraint.
    """
    flows = np.asarray(flow, dtype=np.int64)
    if flows.ndim != 1 or flows.size != net.edge_count:
        raise ValidationError(
            f"flow length {flows.size} != edge count {net.edge_count}"
        )
    violations: list[str] = []
    for i, (f, cap) in enumerate(zip(flows.tolist(), net.capacity.tolist())):
        if f < 0:
            violations.append(f"edge {i}: negative flow {f}")
        elif f > cap:
            violations.append(f"edge {i}: flow {f} exceeds capacity {cap}")
    net_out = np.zeros(net.node_count, dtype=np.int64)
    np.add.at(net_out, net.edge_from, flows)
    np.add.at(net_out, net.edge_to, -flows)
    for v in range(net.node_count):
        if v == net.source or v == net.sink:
            continue
        if net_out[v] != 0:
            violations.append(f"node {v}: net out-flow {int(net_out[v])} != 0")
    if net_out[net.source] != net.required_flow:
        violations.append(
            f"source: net out-flow {int(net_out[net.source])} "
            f"!= required {net.required_flow}"
        )
    return (not violations), violations
