"""Shared fixtures and brute-force oracles."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from flowhash import (
    AdamParams,
    EmbeddingSet,
    FlowNetwork,
    LossConfig,
    Rng,
    TrainConfig,
    make_blobs,
    train,
)
from flowhash.trainer import hash_embeddings


def enumerate_feasible_flows(net: FlowNetwork):
    """Yield every integral feasible flow vector (tiny networks only)."""
    ranges = [range(int(c) + 1) for c in net.capacity.tolist()]
    ef = net.edge_from
    et = net.edge_to
    for combo in itertools.product(*ranges):
        flows = np.asarray(combo, dtype=np.int64)
        net_out = np.zeros(net.node_count, dtype=np.int64)
        np.add.at(net_out, ef, flows)
        np.add.at(net_out, et, -flows)
        if net_out[net.source] != net.required_flow:
            continue
        ok = True
        for v in range(net.node_count):
            if v in (net.source, net.sink):
                continue
            if net_out[v] != 0:
                ok = False
                break
        if ok:
            yield flows


def brute_force_min_cost(net: FlowNetwork):
    """(min_cost, found) over all integral feasible flows."""
    best = None
    for flows in enumerate_feasible_flows(net):
        cost = int((flows * net.cost).sum())
        if best is None or cost < best:
            best = cost
    return best, best is not None


def random_dag_network(rng: Rng, max_nodes=8, max_cap=2, max_cost=10) -> FlowNetwork:
    """Random layered-free DAG instance (edges go low->high), negative costs allowed."""
    n = int(rng.integers(3, max_nodes + 1))
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            if rng.uniform() < 0.5:
                cap = int(rng.integers(0, max_cap + 1))
                cost = int(rng.integers(-max_cost, max_cost + 1))
                edges.append((u, v, cap, cost))
    if not edges:
        edges.append((0, n - 1, 1, 0))
    source, sink = 0, n - 1
    source_cap = sum(e[2] for e in edges if e[0] == source)
    required = int(rng.integers(0, min(3, source_cap) + 1)) if source_cap else 0
    return FlowNetwork.from_edges(n, edges, source, sink, required)


EIGHT_CLASS_DATA_SEED = 11
EIGHT_CLASS_TRAIN_SEED = 3


def eight_class_config(max_iter: int = 2000) -> TrainConfig:
    return TrainConfig(
        d=16,
        k=1,
        lam=0.5,
        loss_kind="triplet",
        batch_classes=8,
        batch_per_class=4,
        max_iter=max_iter,
        seed=EIGHT_CLASS_TRAIN_SEED,
        adam=AdamParams(learning_rate=0.05),
        loss_cfg=LossConfig(margin_alpha=0.8, normalize=True, npairs_reg_lambda=0.001),
    )


@pytest.fixture(scope="session")
def eight_class_run():
    """Trained 8-class blobs pipeline shared by the trainer and acceptance tests."""
    dataset = make_blobs(
        classes=8, per_class=50, input_dim=16, spread=0.05, seed=EIGHT_CLASS_DATA_SEED
    )
    cfg = eight_class_config()
    model, history = train(dataset, cfg)
    train_emb = hash_embeddings(model, dataset.features, cfg)
    queries = make_blobs(
        classes=8, per_class=10, input_dim=16, spread=0.05, seed=EIGHT_CLASS_DATA_SEED
    )
    query_emb = hash_embeddings(model, queries.features, cfg)
    return {
        "dataset": dataset,
        "cfg": cfg,
        "model": model,
        "history": history,
        "train_emb": train_emb,
        "train_set": EmbeddingSet(train_emb, dataset.labels),
        "queries": queries,
        "query_emb": query_emb,
    }
