"""Bucketed hash index: build, union-of-buckets query, rerank, and metrics.

An item lives in the k buckets named by its code's set bits. A query
retrieves the union of the buckets at its own code's bits, then reranks the
candidates by Euclidean distance in a caller-supplied base embedding space
(which may differ from the code-generating space).

Candidate counting over many queries is the hot path for the speedup metric;
codes are packed into uint64 words and scanned by a numba kernel or a chunked
numpy fallback.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Optional, Sequence

import numpy as np

from ._accel import kernel_pair, resolve_engine
from .core import HashCode, ValidationError, as_float_matrix


@dataclass(frozen=True)
class HashIndex:
    """d buckets of ascending item ids plus the data needed to rerank."""

    d: int
    buckets: tuple[np.ndarray, ...]
    item_codes: tuple[HashCode, ...]
    base_embeddings: np.ndarray
    labels: np.ndarray

    @property
    def n(self) -> int:
        return len(self.item_codes)

    @property
    def k(self) -> int:
        return self.item_codes[0].k


@dataclass(frozen=True)
class QueryResult:
    retrieved: np.ndarray  # item ids after rerank, best first
    candidate_count: int  # pre-rerank union size (0 flags an empty retrieval)
    index_size: int  # denominator for per-query speedup


class SufTheory(NamedTuple):
    suf: float  # expected speedup over a linear scan
    nq_fraction: float  # expected retrieved fraction of the other n-1 items
    variance_factor: float  # per-item Bernoulli variance (multiply by n-1 for V[N_q])


def build_index(
    codes: Sequence[HashCode], base_embeddings, labels
) -> HashIndex:
    """Inverted bucket lists from per-item codes; idempotent."""
    codes = tuple(codes)
    if not codes:
        raise ValidationError("cannot index an empty code list")
    d = codes[0].d
    k = codes[0].k
    emb = as_float_matrix(base_embeddings, "base_embeddings")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1 or labels.shape[0] != len(codes) or emb.shape[0] != len(codes):
        raise ValidationError("codes, embeddings, and labels must have equal length")
    bucket_lists: list[list[int]] = [[] for _ in range(d)]
    for i, code in enumerate(codes):
        if code.d != d or code.k != k:
            raise ValidationError(
                f"code {i} has (d={code.d}, k={code.k}), expected (d={d}, k={k})"
            )
        for b in code.bits:
            bucket_lists[b].append(i)
    buckets = tuple(np.asarray(lst, dtype=np.int64) for lst in bucket_lists)
    emb.setflags(write=False)
    labels.setflags(write=False)
    return HashIndex(d, buckets, codes, emb, labels)


def query(
    ix: HashIndex,
    q_code: HashCode,
    q_embedding,
    top_m: int,
    exclude: Optional[int] = None,
) -> QueryResult:
    """Union of the buckets at q_code's bits, reranked by Euclidean distance.

    Ties in distance break by item id; `exclude` drops a known self-match.
    """
    if top_m < 1:
        raise ValidationError("top_m must be >= 1")
    if q_code.d != ix.d:
        raise ValidationError(f"query code d={q_code.d} does not match index d={ix.d}")
    q = np.asarray(q_embedding, dtype=np.float64)
    parts = [ix.buckets[b] for b in q_code.bits]
    candidates = np.unique(np.concatenate(parts)) if parts else np.empty(0, np.int64)
    if exclude is not None:
        candidates = candidates[candidates != exclude]
    if candidates.size == 0:
        return QueryResult(np.empty(0, np.int64), 0, ix.n)
    dists = np.linalg.norm(ix.base_embeddings[candidates] - q[None, :], axis=1)
    order = np.lexsort((candidates, dists))
    retrieved = candidates[order[: min(top_m, candidates.size)]]
    return QueryResult(retrieved, int(candidates.size), ix.n)


def scan_candidates(item_codes: Sequence[HashCode], q_code: HashCode) -> np.ndarray:
    """O(n*d) oracle: ids of items whose code shares any bit with the query."""
    qbits = set(q_code.bits)
    return np.asarray(
        [i for i, code in enumerate(item_codes) if not qbits.isdisjoint(code.bits)],
        dtype=np.int64,
    )


def precision_at(
    ix: HashIndex, results: Sequence[QueryResult], query_labels, k: int
) -> float:
    """Mean fraction of the top-min(k, retrieved) results sharing the query label.

    Queries with empty retrieval contribute 0.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    query_labels = np.asarray(query_labels, dtype=np.int64)
    if len(results) != query_labels.shape[0]:
        raise ValidationError("results and query labels must have equal length")
    if not results:
        raise ValidationError("need at least one query")
    total = 0.0
    for res, lab in zip(results, query_labels.tolist()):
        top = res.retrieved[:k]
        if top.size == 0:
            continue
        total += float((ix.labels[top] == lab).mean())
    return total / len(results)


def nmi(ix: HashIndex) -> float:
    """Normalized mutual information between buckets and labels at sparsity 1.

    Normalization is by the arithmetic mean of the two entropies; empty
    buckets are ignored. Only defined when every code has exactly one bit.
    """
    if ix.k != 1:
        raise ValidationError(f"NMI is defined for k=1 codes, got k={ix.k}")
    assignment = np.asarray([code.bits[0] for code in ix.item_codes], dtype=np.int64)
    return _nmi_arithmetic(assignment, ix.labels)


def _nmi_arithmetic(pred: np.ndarray, truth: np.ndarray) -> float:
    n = pred.shape[0]
    pred_ids = np.unique(pred)
    truth_ids = np.unique(truth)
    if pred_ids.size == 1 and truth_ids.size == 1:
        return 1.0
    contingency = np.zeros((pred_ids.size, truth_ids.size), dtype=np.int64)
    pred_pos = np.searchsorted(pred_ids, pred)
    truth_pos = np.searchsorted(truth_ids, truth)
    np.add.at(contingency, (pred_pos, truth_pos), 1)
    pu = contingency.sum(axis=1) / n
    pv = contingency.sum(axis=0) / n
    h_u = -float((pu * np.log(pu)).sum())
    h_v = -float((pv * np.log(pv)).sum())
    mi = 0.0
    for a in range(pred_ids.size):
        for b in range(truth_ids.size):
            c = contingency[a, b]
            if c:
                p = c / n
                mi += p * math.log(p / (pu[a] * pv[b]))
    mean_h = 0.5 * (h_u + h_v)
    if mean_h == 0.0:
        return 0.0
    return float(min(1.0, max(0.0, mi / mean_h)))


def pack_codes(codes: Sequence[HashCode]) -> np.ndarray:
    """n x ceil(d/64) uint64 matrix of dense code words."""
    if not codes:
        raise ValidationError("cannot pack an empty code list")
    return np.vstack([code.to_words() for code in codes])


def _collision_counts_impl(item_words, query_words, subtract_self):
    n = item_words.shape[0]
    nq = query_words.shape[0]
    w = item_words.shape[1]
    counts = np.empty(nq, np.int64)
    for qi in range(nq):
        c = 0
        for i in range(n):
            for j in range(w):
                if item_words[i, j] & query_words[qi, j]:
                    c += 1
                    break
        if subtract_self:
            c -= 1
        counts[qi] = c
    return counts


_collision_numba, _ = kernel_pair(_collision_counts_impl)


def _collision_counts_numpy(item_words, query_words, subtract_self):
    nq = query_words.shape[0]
    counts = np.empty(nq, np.int64)
    chunk = max(1, (1 << 22) // max(1, item_words.shape[0]))
    for lo in range(0, nq, chunk):
        qw = query_words[lo : lo + chunk]
        hits = (item_words[None, :, :] & qw[:, None, :]).any(axis=2)
        counts[lo : lo + chunk] = hits.sum(axis=1)
    if subtract_self:
        counts -= 1
    return counts


def collision_counts(
    item_codes: Sequence[HashCode],
    query_codes: Sequence[HashCode],
    subtract_self: bool = False,
    engine: str = "auto",
) -> np.ndarray:
    """Per-query count of items sharing at least one bit with the query.

    With subtract_self=True queries are taken to be the items themselves (a
    code always collides with itself, so one is subtracted).
    """
    item_words = pack_codes(item_codes)
    query_words = pack_codes(query_codes)
    if item_words.shape[1] != query_words.shape[1]:
        raise ValidationError("item and query codes must share the code length")
    if resolve_engine(engine) == "numba":
        return _collision_numba(item_words, query_words, subtract_self)
    return _collision_counts_numpy(item_words, query_words, subtract_self)


def measured_suf(
    ix: HashIndex,
    query_codes: Optional[Sequence[HashCode]] = None,
    exclude_self: Optional[bool] = None,
    engine: str = "auto",
) -> float:
    """n divided by the mean per-query candidate count.

    Default queries are the index's own items with self-matches excluded.
    """
    if query_codes is None:
        query_codes = ix.item_codes
        if exclude_self is None:
            exclude_self = True
    exclude_self = bool(exclude_self)
    if len(query_codes) == 0:
        raise ValidationError("need at least one query")
    counts = collision_counts(ix.item_codes, query_codes, exclude_self, engine)
    mean_count = float(counts.mean())
    if mean_count <= 0.0:
        return math.inf
    return ix.n / mean_count


def theoretical_suf_exact(d: int, k: int) -> Fraction:
    """Expected speedup under uniformly distributed codes, as an exact rational."""
    if not 1 <= k <= d:
        raise ValidationError(f"need 1 <= k <= d, got k={k}, d={d}")
    total = math.comb(d, k)
    disjoint = math.comb(d - k, k) if d - k >= k else 0
    return Fraction(total, total - disjoint)


def theoretical_suf(d: int, k: int) -> SufTheory:
    """Expected speedup, collision probability, and variance factor.

    For d < 2k two codes always collide and the speedup is 1. As d grows with
    k fixed, the speedup approaches d/k^2.
    """
    suf = theoretical_suf_exact(d, k)
    p_collide = Fraction(1, 1) / suf
    return SufTheory(float(suf), float(p_collide), float(p_collide * (1 - p_collide)))


def metrics_row(
    method: str,
    k: int,
    d: int,
    suf: float,
    precisions: Sequence[tuple[int, float]],
    nmi_value: Optional[float],
) -> tuple[str, str]:
    """(header, row) CSV lines: method,k,d,SUF,pr<k>...,nmi (nmi empty if None)."""
    header = ["method", "k", "d", "SUF"] + [f"pr{k_}" for k_, _ in precisions] + ["nmi"]
    row = [method, str(k), str(d), f"{suf:.4f}"]
    row += [f"{p:.4f}" for _, p in precisions]
    row.append("" if nmi_value is None else f"{nmi_value:.4f}")
    return ",".join(header), ",".join(row)
