"""Comparison code generators: top-k binarization and vector quantization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codes import topk_hash
from .core import EmbeddingSet, HashCode, Rng, ValidationError, as_float_matrix


@dataclass(frozen=True)
class Codebook:
    centroids: np.ndarray  # one centroid per bucket
    iterations: int
    inertia: float
    inertia_history: tuple[float, ...]

    def __post_init__(self):
        cent = as_float_matrix(self.centroids, "centroids")
        cent.setflags(write=False)
        object.__setattr__(self, "centroids", cent)


def th_codes(e: EmbeddingSet, k: int) -> list[HashCode]:
    """Per-item top-k binarization of the embedding coordinates."""
    return [topk_hash(e.data[i], k) for i in range(e.n)]


def _sq_dists(data: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # (n, c) squared Euclidean distances; plain expansion keeps it exact enough
    # and deterministic.
    diffs = data[:, None, :] - centroids[None, :, :]
    return (diffs * diffs).sum(axis=2)


def _plus_plus_seed(data: np.ndarray, n_centroids: int, rng: Rng) -> np.ndarray:
    n = data.shape[0]
    centroids = np.empty((n_centroids, data.shape[1]), dtype=np.float64)
    first = int(rng.integers(0, n))
    centroids[0] = data[first]
    d2 = ((data - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, n_centroids):
        total = float(d2.sum())
        if total > 0.0:
            pick = int(rng.choice(n, p=d2 / total))
        else:
            pick = int(rng.integers(0, n))  # all points covered; any duplicate works
        centroids[j] = data[pick]
        d2 = np.minimum(d2, ((data - centroids[j]) ** 2).sum(axis=1))
    return centroids


def kmeans(
    e: EmbeddingSet,
    n_centroids: int,
    max_iter: int = 100,
    tol: float = 1e-6,
    seed: int = 0,
) -> Codebook:
    """Lloyd iterations from k-means++ seeding; deterministic given the seed.

    Empty clusters are repaired by reassigning the farthest point of the
    largest cluster. Stops when the relative centroid shift drops below tol.
    """
    if n_centroids < 1:
        raise ValidationError("need at least one centroid")
    if e.n < n_centroids:
        raise ValidationError(f"need n >= centroids, got n={e.n} < {n_centroids}")
    rng = Rng(seed)
    data = e.data
    centroids = _plus_plus_seed(data, n_centroids, rng)
    history: list[float] = []
    iterations = 0
    for iterations in range(1, max_iter + 1):
        d2 = _sq_dists(data, centroids)
        assign = np.argmin(d2, axis=1)  # ties to the lower centroid index
        history.append(float(d2[np.arange(e.n), assign].sum()))
        # Repair empty clusters before the update step.
        sizes = np.bincount(assign, minlength=n_centroids)
        for j in range(n_centroids):
            if sizes[j] > 0:
                continue
            donor = int(np.argmax(sizes))
            members = np.nonzero(assign == donor)[0]
            far = members[int(np.argmax(d2[members, donor]))]
            assign[far] = j
            sizes[donor] -= 1
            sizes[j] += 1
        new_centroids = centroids.copy()
        for j in range(n_centroids):
            members = np.nonzero(assign == j)[0]
            new_centroids[j] = data[members].mean(axis=0)
        shift = float(np.linalg.norm(new_centroids - centroids, axis=1).max())
        scale = float(np.linalg.norm(centroids, axis=1).max())
        centroids = new_centroids
        if shift <= tol * max(1.0, scale):
            break
    d2 = _sq_dists(data, centroids)
    inertia = float(d2.min(axis=1).sum())
    return Codebook(centroids, iterations, inertia, tuple(history))


def vq_codes(e: EmbeddingSet, cb: Codebook, k: int) -> list[HashCode]:
    """Indices of the k nearest centroids per item (ties to the lower index).

    Identical to top-k binarization applied to the negated distances.
    """
    if k > cb.centroids.shape[0]:
        raise ValidationError(
            f"k={k} exceeds the number of centroids {cb.centroids.shape[0]}"
        )
    dists = np.sqrt(_sq_dists(e.data, cb.centroids))
    return [topk_hash(-dists[i], k) for i in range(e.n)]
