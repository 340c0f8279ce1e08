"""Embedding losses over the gated-residual hash distance.

The distance between two items is the L1 norm of their embedding difference
restricted to the union of their codes' set bits, so a pair at distance zero
must agree on every active coordinate and gradients do not vanish the way
they would for a hamming distance on binarized codes.

Codes are treated as constants here (block-coordinate semantics of the
alternating training loop); gradients are exact subgradients with the sign
convention 0 at zero residuals and at inactive hinges.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .core import HashCode, ValidationError, as_float_matrix, random_k_sparse_codes


@dataclass(frozen=True)
class LossConfig:
    margin_alpha: float = 0.2
    npairs_reg_lambda: float = 0.0
    normalize: bool = True  # unit-norm embeddings before masking (triplet mode)

    def __post_init__(self):
        if self.margin_alpha < 0:
            raise ValidationError("margin_alpha must be >= 0")
        if self.npairs_reg_lambda < 0:
            raise ValidationError("npairs_reg_lambda must be >= 0")


@dataclass(frozen=True)
class Batch:
    """Mini-batch of embeddings, labels, and fixed per-item codes."""

    embeddings: np.ndarray
    labels: np.ndarray
    codes: tuple[HashCode, ...]

    def __post_init__(self):
        emb = as_float_matrix(self.embeddings, "embeddings")
        labels = np.asarray(self.labels, dtype=np.int64)
        codes = tuple(self.codes)
        if labels.ndim != 1 or labels.shape[0] != emb.shape[0]:
            raise ValidationError("labels must be 1-d and match the batch size")
        if len(codes) != emb.shape[0]:
            raise ValidationError(f"expected {emb.shape[0]} codes, got {len(codes)}")
        for i, code in enumerate(codes):
            if code.d != emb.shape[1]:
                raise ValidationError(f"code {i} has d={code.d}, expected {emb.shape[1]}")
        emb.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "embeddings", emb)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "codes", codes)

    @property
    def size(self) -> int:
        return self.embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def with_embeddings(self, emb) -> "Batch":
        return replace(self, embeddings=emb)


class LossResult(NamedTuple):
    loss: float
    grad: np.ndarray  # d(loss)/d(embeddings), same shape as the batch
    term_count: int  # mined triplets / positive pairs; 0 flags a degenerate batch


def hash_distance(f_i, f_j, h_i: HashCode, h_j: HashCode) -> float:
    """L1 distance on the union of the two codes' set bits."""
    f_i = np.asarray(f_i, dtype=np.float64)
    f_j = np.asarray(f_j, dtype=np.float64)
    if f_i.shape != f_j.shape or f_i.ndim != 1:
        raise ValidationError("embeddings must be 1-d and of equal length")
    if h_i.d != f_i.shape[0] or h_j.d != f_j.shape[0]:
        raise ValidationError("code length must match embedding dimension")
    union = sorted(set(h_i.bits) | set(h_j.bits))
    return float(np.abs(f_i[union] - f_j[union]).sum())


def hash_distance_subgrad(
    f_i, f_j, h_i: HashCode, h_j: HashCode
) -> tuple[np.ndarray, np.ndarray]:
    """Subgradients of hash_distance w.r.t. f_i and f_j (sign 0 at zero residual)."""
    f_i = np.asarray(f_i, dtype=np.float64)
    f_j = np.asarray(f_j, dtype=np.float64)
    union = sorted(set(h_i.bits) | set(h_j.bits))
    g_i = np.zeros_like(f_i)
    g_i[union] = np.sign(f_i[union] - f_j[union])
    return g_i, -g_i


def _union_masks(codes: Sequence[HashCode], d: int) -> np.ndarray:
    dense = np.zeros((len(codes), d), dtype=np.bool_)
    for i, code in enumerate(codes):
        dense[i, list(code.bits)] = True
    return dense[:, None, :] | dense[None, :, :]


def pairwise_hash_distances(f: np.ndarray, codes: Sequence[HashCode]) -> np.ndarray:
    """b x b matrix of gated-residual distances."""
    masks = _union_masks(codes, f.shape[1])
    diffs = np.abs(f[:, None, :] - f[None, :, :])
    return (diffs * masks).sum(axis=2)


def mine_triplets(dist: np.ndarray, labels: np.ndarray) -> list[tuple[int, int, int]]:
    """Semi-hard mining over ordered anchor-positive pairs.

    For each pair (i, j) with equal labels, pick the negative with the
    smallest distance still larger than dist[i, j]; if none exists, fall back
    to the farthest negative. Ties go to the lowest item index.
    """
    b = dist.shape[0]
    triplets = []
    for i in range(b):
        neg = np.nonzero(labels != labels[i])[0]
        if neg.size == 0:
            continue
        for j in range(b):
            if j == i or labels[j] != labels[i]:
                continue
            d_ij = dist[i, j]
            harder = neg[dist[i, neg] > d_ij]
            if harder.size:
                pick = harder[np.argmin(dist[i, harder])]
            else:
                pick = neg[np.argmax(dist[i, neg])]
            triplets.append((i, j, int(pick)))
    return triplets


def _normalize_rows(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(x, axis=1)
    if (norms == 0).any():
        raise ValidationError("cannot unit-normalize a zero embedding")
    return x / norms[:, None], norms


def _chain_through_normalization(
    grad_f: np.ndarray, f: np.ndarray, norms: np.ndarray
) -> np.ndarray:
    inner = (grad_f * f).sum(axis=1, keepdims=True)
    return (grad_f - inner * f) / norms[:, None]


def triplet_loss(batch: Batch, cfg: LossConfig) -> LossResult:
    """Mean hinge over mined triplets with margin cfg.margin_alpha.

    Gradient is w.r.t. the raw batch embeddings; when cfg.normalize the
    unit-normalization happens inside and its Jacobian is included.
    """
    x = batch.embeddings
    if cfg.normalize:
        f, norms = _normalize_rows(x)
    else:
        f = x
    dist = pairwise_hash_distances(f, batch.codes)
    triplets = mine_triplets(dist, batch.labels)
    if not triplets:
        return LossResult(0.0, np.zeros_like(x), 0)
    masks = _union_masks(batch.codes, batch.dim)
    loss = 0.0
    grad_f = np.zeros_like(f)
    inv = 1.0 / len(triplets)
    for i, j, k in triplets:
        hinge = dist[i, j] + cfg.margin_alpha - dist[i, k]
        if hinge <= 0.0:
            continue
        loss += hinge
        s_ij = np.sign(f[i] - f[j]) * masks[i, j]
        s_ik = np.sign(f[i] - f[k]) * masks[i, k]
        grad_f[i] += inv * (s_ij - s_ik)
        grad_f[j] -= inv * s_ij
        grad_f[k] += inv * s_ik
    loss *= inv
    if cfg.normalize:
        grad = _chain_through_normalization(grad_f, f, norms)
    else:
        grad = grad_f
    return LossResult(float(loss), grad, len(triplets))


def npairs_pair_term(d_pos: float, d_negs) -> float:
    """-log softmax weight of the positive among {positive} + negatives.

    Equals log(1 + sum_k exp(d_pos - d_neg_k)), computed stably.
    """
    u = float(d_pos) - np.asarray(d_negs, dtype=np.float64)
    if u.size == 0:
        return 0.0
    m = max(0.0, float(u.max()))
    return m + float(np.log(np.exp(-m) + np.exp(u - m).sum()))


def _npairs_pairs(labels: np.ndarray) -> list[tuple[int, int]]:
    pairs: dict[int, list[int]] = {}
    for i, lab in enumerate(labels.tolist()):
        pairs.setdefault(lab, []).append(i)
    for lab, members in pairs.items():
        if len(members) != 2:
            raise ValidationError(
                f"npairs batch needs each class exactly twice; class {lab} "
                f"appears {len(members)} times"
            )
    # Ordered pairs in both directions keep the loss symmetric in the pair
    # members (and hence invariant under batch permutation).
    ordered = []
    for _, (u, v) in sorted(pairs.items()):
        ordered.append((u, v))
        ordered.append((v, u))
    return ordered


def npairs_loss(batch: Batch, cfg: LossConfig) -> LossResult:
    """Softmax loss over negative distances plus an L2 embedding regularizer.

    Every positive pair contributes in both anchor directions; negatives for
    an anchor are all items of other classes. The regularizer weight is
    cfg.npairs_reg_lambda divided by the pair size 2.
    """
    f = batch.embeddings
    pairs = _npairs_pairs(batch.labels)
    dist = pairwise_hash_distances(f, batch.codes)
    masks = _union_masks(batch.codes, batch.dim)
    loss = 0.0
    grad = np.zeros_like(f)
    inv = 1.0 / len(pairs)
    for a, pos in pairs:
        negs = np.nonzero(batch.labels != batch.labels[a])[0]
        u = dist[a, pos] - dist[a, negs]
        m = max(0.0, float(u.max())) if u.size else 0.0
        denom = np.exp(-m) + np.exp(u - m).sum() if u.size else 1.0
        loss += m + float(np.log(denom))
        if u.size == 0:
            continue
        sigma_k = np.exp(u - m) / denom
        sigma = float(sigma_k.sum())
        s_ap = np.sign(f[a] - f[pos]) * masks[a, pos]
        grad[a] += inv * sigma * s_ap
        grad[pos] -= inv * sigma * s_ap
        for w, kneg in zip(sigma_k.tolist(), negs.tolist()):
            s_ak = np.sign(f[a] - f[kneg]) * masks[a, kneg]
            grad[a] -= inv * w * s_ak
            grad[kneg] += inv * w * s_ak
    loss *= inv
    m_per_class = 2
    reg = cfg.npairs_reg_lambda / m_per_class
    loss += reg * float((f * f).sum())
    grad += 2.0 * reg * f
    return LossResult(float(loss), grad, len(pairs))


def random_smooth_batch(
    rng,
    loss_kind: str,
    n_classes: int = 4,
    per_class: int = 2,
    d: int = 8,
    k: int = 2,
    cfg: LossConfig | None = None,
    gap: float = 2e-3,
    max_tries: int = 500,
) -> Batch:
    """Random batch kept away from the loss's non-differentiable points.

    Rejects draws with any near-zero masked residual, near-tied mining
    decision, or hinge near its kink, so central differences at small epsilon
    see a locally smooth function.
    """
    if loss_kind not in ("triplet", "npairs"):
        raise ValidationError(f"unknown loss kind {loss_kind!r}")
    if loss_kind == "npairs" and per_class != 2:
        raise ValidationError("npairs batches need exactly 2 items per class")
    cfg = cfg or LossConfig()
    labels = np.repeat(np.arange(n_classes, dtype=np.int64), per_class)
    b = labels.shape[0]
    for _ in range(max_tries):
        emb = rng.normal(size=(b, d))
        codes = tuple(random_k_sparse_codes(rng, b, d, k))
        batch = Batch(emb, labels, codes)
        f = emb
        if loss_kind == "triplet" and cfg.normalize:
            norms = np.linalg.norm(emb, axis=1)
            if norms.min() < 0.5:
                continue
            f = emb / norms[:, None]
        diffs = np.abs(f[:, None, :] - f[None, :, :])
        off_diag = ~np.eye(b, dtype=np.bool_)
        if diffs[off_diag].min() <= gap:
            continue
        if loss_kind == "triplet" and not _triplet_decisions_stable(
            pairwise_hash_distances(f, codes), labels, cfg.margin_alpha, gap
        ):
            continue
        return batch
    raise ValidationError(f"no smooth batch found in {max_tries} tries")


def _triplet_decisions_stable(
    dist: np.ndarray, labels: np.ndarray, alpha: float, gap: float
) -> bool:
    for i, j, kneg in mine_triplets(dist, labels):
        negs = np.nonzero(labels != labels[i])[0]
        if np.abs(dist[i, negs] - dist[i, j]).min() <= gap:
            return False
        others = negs[negs != kneg]
        if others.size and np.abs(dist[i, others] - dist[i, kneg]).min() <= gap:
            return False
        if abs(dist[i, j] + alpha - dist[i, kneg]) <= gap:
            return False
    return True


LossFn = Callable[[Batch, LossConfig], LossResult]


def finite_diff_check(
    lossfn: LossFn, batch: Batch, cfg: LossConfig, epsilon: float = 1e-5
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Only coordinates with |analytic gradient| > 1e-6 are compared; returns
    0.0 when none qualify.
    """
    if epsilon <= 0:
        raise ValidationError("epsilon must be positive")
    analytic = lossfn(batch, cfg).grad
    worst = 0.0
    base = batch.embeddings
    for i in range(batch.size):
        for q in range(batch.dim):
            if abs(analytic[i, q]) <= 1e-6:
                continue
            plus = base.copy()
            plus[i, q] += epsilon
            minus = base.copy()
            minus[i, q] -= epsilon
            fd = (
                lossfn(batch.with_embeddings(plus), cfg).loss
                - lossfn(batch.with_embeddings(minus), cfg).loss
            ) / (2.0 * epsilon)
            rel = abs(fd - analytic[i, q]) / abs(analytic[i, q])
            worst = max(worst, rel)
    return worst
