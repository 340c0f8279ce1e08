"""Desk-scale alternating training loop.

Each step embeds a class-balanced mini-batch through a linear model, solves
the class-level code assignment exactly on the batch means, expands the codes
to items, takes one ADAM step on the metric loss (codes held fixed), and
recomputes fresh codes next step. Codes are never cached across batches.

The deep backbone of a full-scale setup collapses here to a single linear map
trained on raw features, which exercises every step of the loop with analytic
gradients and no ML framework.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .codes import (
    AssignmentProblem,
    default_lambda,
    eval_bound_gap_M,
    eval_objective_g,
    expand_class_codes,
    solve_assignment,
)
from .core import EmbeddingSet, HashCode, Rng, ValidationError, as_float_matrix, class_means
from .metric import Batch, LossConfig, LossResult, npairs_loss, triplet_loss

DEFAULT_SCALE = 10**6


@dataclass(frozen=True)
class AdamParams:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    learning_rate: float = 0.05


@dataclass(frozen=True)
class TrainConfig:
    d: int
    k: int
    lam: Optional[float] = None  # None: 0.5 * mean |class-mean entry| per batch
    loss_kind: str = "npairs"  # "triplet" or "npairs"
    loss_cfg: LossConfig = field(default_factory=LossConfig)
    gamma: float = 1.0  # recorded trade-off weight; the alternating loop does not use it
    batch_classes: int = 8
    batch_per_class: int = 2
    max_iter: int = 200
    adam: AdamParams = field(default_factory=AdamParams)
    scale: int = DEFAULT_SCALE
    seed: int = 0

    def __post_init__(self):
        if self.loss_kind not in ("triplet", "npairs"):
            raise ValidationError(f"unknown loss kind {self.loss_kind!r}")
        if self.max_iter < 1:
            raise ValidationError("max_iter must be >= 1")
        if self.batch_classes < 2:
            raise ValidationError("batch_classes must be >= 2")
        if self.batch_per_class < 2:
            raise ValidationError("batch_per_class must be >= 2")
        if self.loss_kind == "npairs" and self.batch_per_class != 2:
            raise ValidationError("npairs batches need exactly 2 items per class")
        if not 1 <= self.k <= self.d:
            raise ValidationError(f"need 1 <= k <= d, got k={self.k}, d={self.d}")
        if self.lam is not None and self.lam < 0:
            raise ValidationError("lam must be non-negative")


@dataclass
class LinearModel:
    """Linear projection from input features to the embedding space."""

    weight: np.ndarray  # input_dim x d
    adam_m: np.ndarray
    adam_v: np.ndarray
    step: int = 0

    @classmethod
    def init(cls, input_dim: int, d: int, rng: Rng) -> "LinearModel":
        w = rng.normal(size=(input_dim, d)) / np.sqrt(input_dim)
        return cls(w, np.zeros_like(w), np.zeros_like(w))

    def embed(self, features: np.ndarray) -> np.ndarray:
        return features @ self.weight

    def adam_update(self, grad: np.ndarray, params: AdamParams) -> None:
        self.step += 1
        self.adam_m = params.beta1 * self.adam_m + (1 - params.beta1) * grad
        self.adam_v = params.beta2 * self.adam_v + (1 - params.beta2) * grad * grad
        m_hat = self.adam_m / (1 - params.beta1**self.step)
        v_hat = self.adam_v / (1 - params.beta2**self.step)
        self.weight = self.weight - params.learning_rate * m_hat / (
            np.sqrt(v_hat) + params.eps
        )


@dataclass(frozen=True)
class SyntheticDataset:
    """Gaussian clusters around deterministic, well-separated class centers."""

    features: np.ndarray
    labels: np.ndarray
    classes: int
    per_class: int
    spread: float
    seed: int

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    def as_embedding_set(self) -> EmbeddingSet:
        return EmbeddingSet(self.features, self.labels)


def make_blobs(
    classes: int, per_class: int, input_dim: int, spread: float, seed: int
) -> SyntheticDataset:
    """Deterministic Gaussian blobs; centers are orthonormal when they fit.

    With classes <= input_dim the class centers are rows of a random
    orthogonal matrix (unit length, mutually orthogonal); otherwise random
    unit vectors.
    """
    if classes < 1 or per_class < 1 or input_dim < 1:
        raise ValidationError("classes, per_class, and input_dim must be positive")
    if spread < 0:
        raise ValidationError("spread must be non-negative")
    rng = Rng(seed)
    gauss = rng.normal(size=(input_dim, max(classes, input_dim)))
    if classes <= input_dim:
        q_mat, _ = np.linalg.qr(gauss[:, :input_dim])
        centers = q_mat[:, :classes].T.copy()
    else:
        raw = gauss.T[:classes]
        centers = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    labels = np.repeat(np.arange(classes, dtype=np.int64), per_class)
    noise = rng.normal(size=(classes * per_class, input_dim), scale=1.0)
    features = centers[labels] + spread * noise if spread > 0 else centers[labels].copy()
    return SyntheticDataset(features, labels, classes, per_class, float(spread), int(seed))


class StepResult(NamedTuple):
    loss: float
    codes: tuple[HashCode, ...]  # per-item codes for the batch
    g_value: float
    bound_gap: float
    term_count: int


class HistoryRow(NamedTuple):
    iteration: int
    loss: float
    g_value: float
    bound_gap: float


def resolve_lambda(cfg: TrainConfig, means: np.ndarray) -> np.ndarray:
    if cfg.lam is None:
        return default_lambda(means)
    return np.full(cfg.d, float(cfg.lam))


def hash_embeddings(model: LinearModel, features, cfg: TrainConfig) -> np.ndarray:
    """The embedding the hash function sees: unit-normalized in triplet mode.

    The triplet subproblem constrains embeddings to the unit sphere, so code
    assignment, diagnostics, and downstream indexing all use the normalized
    output; npairs mode works on the raw linear output.
    """
    emb = model.embed(as_float_matrix(features, "features"))
    if cfg.loss_kind == "triplet" and cfg.loss_cfg.normalize:
        norms = np.linalg.norm(emb, axis=1, keepdims=True)
        if (norms == 0).any():
            raise ValidationError("cannot normalize a zero embedding")
        emb = emb / norms
    return emb


def train_step(
    model: LinearModel,
    batch_features: np.ndarray,
    batch_labels: np.ndarray,
    cfg: TrainConfig,
) -> StepResult:
    """One alternating step: assign codes on batch means, then one ADAM update."""
    features = as_float_matrix(batch_features, "batch_features")
    hashed = EmbeddingSet.from_raw(hash_embeddings(model, features, cfg), batch_labels)
    means = class_means(hashed)
    lam = resolve_lambda(cfg, means)
    solution = solve_assignment(AssignmentProblem(means, lam, cfg.k), scale=cfg.scale)
    item_codes = expand_class_codes(solution.codes, hashed.labels)
    # The loss takes the raw linear output; triplet mode re-normalizes inside
    # and its gradient already carries the normalization Jacobian.
    batch = Batch(model.embed(features), hashed.labels, item_codes)
    lossfn = triplet_loss if cfg.loss_kind == "triplet" else npairs_loss
    result: LossResult = lossfn(batch, cfg.loss_cfg)
    grad_w = features.T @ result.grad
    model.adam_update(grad_w, cfg.adam)
    g_value = eval_objective_g(hashed, item_codes, lam)
    bound_gap = eval_bound_gap_M(hashed, cfg.k)
    return StepResult(result.loss, item_codes, g_value, bound_gap, result.term_count)


def _sample_batch(
    rng: Rng, labels: np.ndarray, n_classes: int, cfg: TrainConfig
) -> np.ndarray:
    picked = rng.choice(n_classes, size=min(cfg.batch_classes, n_classes), replace=False)
    rows = []
    for c in sorted(int(c) for c in np.atleast_1d(picked)):
        members = np.nonzero(labels == c)[0]
        chosen = rng.choice(members.size, size=cfg.batch_per_class, replace=False)
        rows.extend(members[np.sort(np.atleast_1d(chosen))].tolist())
    return np.asarray(rows, dtype=np.int64)


def train(
    dataset: SyntheticDataset, cfg: TrainConfig
) -> tuple[LinearModel, list[HistoryRow]]:
    """Run the alternating loop for max_iter steps; history is per-iteration."""
    labels = dataset.labels
    n_classes = int(labels.max()) + 1
    counts = np.bincount(labels, minlength=n_classes)
    if counts.min() < cfg.batch_per_class:
        raise ValidationError(
            f"every class needs >= {cfg.batch_per_class} items, min is {counts.min()}"
        )
    rng = Rng(cfg.seed)
    model = LinearModel.init(dataset.input_dim, cfg.d, rng)
    history: list[HistoryRow] = []
    for it in range(1, cfg.max_iter + 1):
        rows = _sample_batch(rng, labels, n_classes, cfg)
        step = train_step(model, dataset.features[rows], labels[rows], cfg)
        history.append(HistoryRow(it, step.loss, step.g_value, step.bound_gap))
    return model, history


def history_to_csv(history: Sequence[HistoryRow]) -> str:
    lines = ["iter,loss,g_value,bound_gap_M"]
    for row in history:
        lines.append(
            f"{row.iteration},{row.loss:.10g},{row.g_value:.10g},{row.bound_gap:.10g}"
        )
    return "\n".join(lines) + "\n"
