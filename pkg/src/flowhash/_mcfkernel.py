"""Successive-shortest-path kernel for integer min-cost flow.

Written in nopython-compatible numpy so the same code runs numba-compiled or
interpreted (see ``_accel``). Residual edges are stored in pairs: input edge
``i`` owns forward residual edge ``2i`` and reverse residual edge ``2i+1``,
so ``re ^ 1`` flips between them. Adjacency lists keep ascending residual-edge
ids and relaxation only accepts strict improvements, which together with the
(dist, node) heap order makes the returned flow deterministic.
"""

from __future__ import annotations

import numpy as np

from ._accel import kernel_pair

INF = np.int64(1) << np.int64(62)

STATUS_OPTIMAL = 0
STATUS_INFEASIBLE = 1
STATUS_NEGATIVE_CYCLE = 2


def _ssp_impl(node_count, e_from, e_to, e_cap, e_cost, source, sink, required):
    m = e_from.shape[0]
    n_res = 2 * m
    rcap = np.empty(n_res, np.int64)
    rcost = np.empty(n_res, np.int64)
    rtail = np.empty(n_res, np.int64)
    rhead = np.empty(n_res, np.int64)
    for i in range(m):
        rcap[2 * i] = e_cap[i]
        rcost[2 * i] = e_cost[i]
        rtail[2 * i] = e_from[i]
        rhead[2 * i] = e_to[i]
        rcap[2 * i + 1] = 0
        rcost[2 * i + 1] = -e_cost[i]
        rtail[2 * i + 1] = e_to[i]
        rhead[2 * i + 1] = e_from[i]

    # CSR adjacency over residual edges, ascending edge id within each node.
    start = np.zeros(node_count + 1, np.int64)
    for re in range(n_res):
        start[rtail[re] + 1] += 1
    for v in range(node_count):
        start[v + 1] += start[v]
    adj = np.empty(n_res, np.int64)
    fill = start[:node_count].copy()
    for re in range(n_res):
        t = rtail[re]
        adj[fill[t]] = re
        fill[t] += 1

    flows = np.zeros(m, np.int64)
    pot = np.zeros(node_count, np.int64)

    has_negative = False
    for i in range(m):
        if e_cost[i] < 0:
            has_negative = True
            break
    if has_negative:
        # Bellman-Ford from a virtual source attached to every node: yields
        # potentials valid on the whole graph and detects any negative cycle.
        dist0 = np.zeros(node_count, np.int64)
        changed = True
        for _ in range(node_count + 1):
            changed = False
            for re in range(n_res):
                if rcap[re] > 0:
                    nd = dist0[rtail[re]] + rcost[re]
                    if nd < dist0[rhead[re]]:
                        dist0[rhead[re]] = nd
                        changed = True
            if not changed:
                break
        if changed:
            return STATUS_NEGATIVE_CYCLE, flows, np.int64(0)
        pot = dist0

    dist = np.empty(node_count, np.int64)
    prev_edge = np.empty(node_count, np.int64)
    settled = np.empty(node_count, np.bool_)
    heap_key = np.empty(n_res + 2, np.int64)
    heap_node = np.empty(n_res + 2, np.int64)

    sent = np.int64(0)
    while sent < required:
        # Dijkstra on reduced costs, early exit once the sink is settled.
        for v in range(node_count):
            dist[v] = INF
            prev_edge[v] = -1
            settled[v] = False
        dist[source] = 0
        hsize = 1
        heap_key[0] = 0
        heap_node[0] = source
        reached_sink = False
        while hsize > 0:
            top_key = heap_key[0]
            top_node = heap_node[0]
            hsize -= 1
            heap_key[0] = heap_key[hsize]
            heap_node[0] = heap_node[hsize]
            pos = 0
            while True:
                child = 2 * pos + 1
                if child >= hsize:
                    break
                right = child + 1
                if right < hsize and (
                    heap_key[right] < heap_key[child]
                    or (heap_key[right] == heap_key[child] and heap_node[right] < heap_node[child])
                ):
                    child = right
                if heap_key[child] < heap_key[pos] or (
                    heap_key[child] == heap_key[pos] and heap_node[child] < heap_node[pos]
                ):
                    heap_key[pos], heap_key[child] = heap_key[child], heap_key[pos]
                    heap_node[pos], heap_node[child] = heap_node[child], heap_node[pos]
                    pos = child
                else:
                    break
            u = top_node
            if settled[u] or top_key > dist[u]:
                continue
            settled[u] = True
            if u == sink:
                reached_sink = True
                break
            du = dist[u]
            for ptr in range(start[u], start[u + 1]):
                re = adj[ptr]
                if rcap[re] > 0:
                    v = rhead[re]
                    if not settled[v]:
                        nd = du + rcost[re] + pot[u] - pot[v]
                        if nd < dist[v]:
                            dist[v] = nd
                            prev_edge[v] = re
                            heap_key[hsize] = nd
                            heap_node[hsize] = v
                            pos = hsize
                            hsize += 1
                            while pos > 0:
                                parent = (pos - 1) // 2
                                if heap_key[pos] < heap_key[parent] or (
                                    heap_key[pos] == heap_key[parent]
                                    and heap_node[pos] < heap_node[parent]
                                ):
                                    heap_key[pos], heap_key[parent] = (
                                        heap_key[parent],
                                        heap_key[pos],
                                    )
                                    heap_node[pos], heap_node[parent] = (
                                        heap_node[parent],
                                        heap_node[pos],
                                    )
                                    pos = parent
                                else:
                                    break
        if not reached_sink:
            return STATUS_INFEASIBLE, np.zeros(m, np.int64), np.int64(0)

        dt = dist[sink]
        for v in range(node_count):
            dv = dist[v]
            if dv > dt:
                dv = dt
            pot[v] += dv

        bottleneck = required - sent
        v = sink
        while v != source:
            re = prev_edge[v]
            if rcap[re] < bottleneck:
                bottleneck = rcap[re]
            v = rtail[re]
        v = sink
        while v != source:
            re = prev_edge[v]
            rcap[re] -= bottleneck
            rcap[re ^ 1] += bottleneck
            v = rtail[re]
        sent += bottleneck

    total = np.int64(0)
    for i in range(m):
        flows[i] = rcap[2 * i + 1]
        total += e_cost[i] * flows[i]
    return STATUS_OPTIMAL, flows, total


ssp_numba, ssp_python = kernel_pair(_ssp_impl)
