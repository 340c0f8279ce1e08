"""Shared domain types: embedding sets, k-sparse hash codes, deterministic RNG.

Everything here is immutable after construction and safe to share across
threads; ``Rng`` is the one exception and is meant to be owned by a single
caller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

WORD_BITS = 64


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


def as_float_matrix(data, name: str = "data") -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be a 2-d matrix, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValidationError(f"{name} contains NaN or Inf")
    return np.ascontiguousarray(arr)


def as_float_vector(data, name: str = "vector") -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be 1-d, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValidationError(f"{name} contains NaN or Inf")
    return arr


def canonicalize_labels(raw: Sequence[int]) -> tuple[np.ndarray, dict[int, int]]:
    """Relabel integers to 0..C-1 in order of first appearance.

    Returns the relabeled array and the old->new mapping (a bijection onto
    the labels that actually occur).
    """
    arr = np.asarray(raw)
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError("labels must be a non-empty 1-d sequence")
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValidationError(f"labels must be integers, got dtype {arr.dtype}")
    if (arr < 0).any():
        raise ValidationError("labels must be non-negative")
    mapping: dict[int, int] = {}
    out = np.empty(arr.size, dtype=np.int64)
    for i, lab in enumerate(arr.tolist()):
        if lab not in mapping:
            mapping[lab] = len(mapping)
        out[i] = mapping[lab]
    return out, mapping


@dataclass(frozen=True)
class EmbeddingSet:
    """n x d matrix of finite embedding vectors with canonical labels 0..C-1."""

    data: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        data = as_float_matrix(self.data)
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or not np.issubdtype(labels.dtype, np.integer):
            raise ValidationError("labels must be a 1-d integer array")
        labels = labels.astype(np.int64)
        if labels.shape[0] != data.shape[0]:
            raise ValidationError(
                f"labels length {labels.shape[0]} != item count {data.shape[0]}"
            )
        if data.shape[0] == 0:
            raise ValidationError("embedding set must be non-empty")
        present = np.unique(labels)
        n_classes = int(present[-1]) + 1 if present.size else 0
        if present[0] < 0 or present.size != n_classes:
            raise ValidationError(
                "labels must form a contiguous 0..C-1 range; "
                "use EmbeddingSet.from_raw to canonicalize"
            )
        data.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_raw(cls, data, raw_labels) -> "EmbeddingSet":
        labels, _ = canonicalize_labels(raw_labels)
        return cls(data, labels)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1

    def class_indices(self, c: int) -> np.ndarray:
        return np.nonzero(self.labels == c)[0]


@dataclass(frozen=True)
class HashCode:
    """Binary d-bit code with exactly k set bits, stored as sorted bit indices."""

    bits: tuple[int, ...]
    d: int

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        d = int(self.d)
        if d < 1:
            raise ValidationError(f"code length must be >= 1, got {d}")
        if not 1 <= len(bits) <= d:
            raise ValidationError(f"need 1 <= k <= d set bits, got k={len(bits)}, d={d}")
        if any(b1 >= b2 for b1, b2 in zip(bits, bits[1:])):
            raise ValidationError(f"bit indices must be strictly increasing: {bits}")
        if bits[0] < 0 or bits[-1] >= d:
            raise ValidationError(f"bit indices out of range [0, {d}): {bits}")
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "d", d)

    @property
    def k(self) -> int:
        return len(self.bits)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.d, dtype=np.bool_)
        dense[list(self.bits)] = True
        return dense

    def to_words(self) -> np.ndarray:
        """Pack into one uint64 machine word per 64 bits."""
        words = np.zeros((self.d + WORD_BITS - 1) // WORD_BITS, dtype=np.uint64)
        for b in self.bits:
            words[b // WORD_BITS] |= np.uint64(1) << np.uint64(b % WORD_BITS)
        return words

    @classmethod
    def from_dense(cls, dense) -> "HashCode":
        dense = np.asarray(dense, dtype=np.bool_)
        if dense.ndim != 1:
            raise ValidationError("dense code must be 1-d")
        return cls(tuple(int(i) for i in np.nonzero(dense)[0]), dense.size)

    @classmethod
    def from_words(cls, words, d: int) -> "HashCode":
        words = np.asarray(words, dtype=np.uint64)
        bits = []
        for w, word in enumerate(words.tolist()):
            base = w * WORD_BITS
            while word:
                low = word & -word
                bits.append(base + low.bit_length() - 1)
                word ^= low
        return cls(tuple(bits), d)

    def intersects(self, other: "HashCode") -> bool:
        return not set(self.bits).isdisjoint(other.bits)


@dataclass(frozen=True)
class SparsityConfig:
    """Code length d, bits-per-code k, and per-bit collision penalties lam >= 0."""

    d: int
    k: int
    lam: np.ndarray

    def __post_init__(self):
        d, k = int(self.d), int(self.k)
        if not 1 <= k <= d:
            raise ValidationError(f"need 1 <= k <= d, got k={k}, d={d}")
        lam = as_float_vector(self.lam, "lam")
        if lam.shape[0] != d:
            raise ValidationError(f"lam length {lam.shape[0]} != d {d}")
        if (lam < 0).any():
            raise ValidationError("lam entries must be non-negative")
        lam = lam.copy()
        lam.setflags(write=False)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "lam", lam)

    @classmethod
    def uniform(cls, d: int, k: int, lam0: float) -> "SparsityConfig":
        return cls(d, k, np.full(d, float(lam0)))


class Rng:
    """Deterministic counter-based RNG (Philox).

    The same seed and call sequence produce identical streams on every
    platform. Single-owner: do not share one instance across threads.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        if self.seed < 0:
            raise ValidationError("seed must be non-negative")
        self._gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(self.seed)))

    @classmethod
    def _wrap(cls, gen: np.random.Generator) -> "Rng":
        rng = cls.__new__(cls)
        rng.seed = -1
        rng._gen = gen
        return rng

    def spawn(self) -> "Rng":
        """Derive an independent child stream (advances this stream's state)."""
        return Rng._wrap(self._gen.spawn(1)[0])

    def normal(self, size=None, scale: float = 1.0) -> np.ndarray:
        return self._gen.normal(0.0, scale, size=size)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self._gen.uniform(low, high, size=size)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def choice(self, n_or_items, size=None, replace=True, p=None):
        return self._gen.choice(n_or_items, size=size, replace=replace, p=p)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def class_means(e: EmbeddingSet) -> np.ndarray:
    """Per-class arithmetic means of the embeddings, one row per class.

    Uses exactly-rounded summation per coordinate, so the result is fully
    independent of item order.
    """
    means = np.empty((e.num_classes, e.d), dtype=np.float64)
    for c in range(e.num_classes):
        rows = e.data[e.labels == c]
        if rows.shape[0] == 0:
            raise ValidationError(f"class {c} is empty")
        for q in range(e.d):
            means[c, q] = math.fsum(rows[:, q].tolist()) / rows.shape[0]
    return means


def random_k_sparse_codes(rng: Rng, n: int, d: int, k: int) -> list[HashCode]:
    """n codes with k set bits drawn uniformly over the C(d, k) possibilities."""
    if not 1 <= k <= d:
        raise ValidationError(f"need 1 <= k <= d, got k={k}, d={d}")
    return [
        HashCode(tuple(sorted(rng.choice(d, size=k, replace=False).tolist())), d)
        for _ in range(n)
    ]
