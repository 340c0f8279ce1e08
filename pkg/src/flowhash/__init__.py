"""k-sparse compound hash codes with exact flow-based assignment.

Learns quantizable embeddings whose d-bit, k-sparse codes index a bucketed
hash table. The class-level code assignment is solved exactly via an integer
minimum-cost-flow reduction; retrieval quality and speedup are evaluated with
precision@k, NMI, and the measured/theoretical speedup factor.
"""

from .core import (
    EmbeddingSet,
    HashCode,
    Rng,
    SparsityConfig,
    ValidationError,
    canonicalize_labels,
    class_means,
    random_k_sparse_codes,
)
from .mincostflow import (
    CostOverflowError,
    FlowNetwork,
    FlowSolution,
    check_feasibility,
    solve_mcf,
)
from .codes import (
    AssignmentProblem,
    AssignmentSolution,
    assign_class_codes,
    brute_force_assignment,
    build_flow_network,
    eval_bound_gap_M,
    eval_objective_g,
    eval_upper_bound_g,
    expand_class_codes,
    solve_assignment,
    topk_hash,
)
from .metric import (
    Batch,
    LossConfig,
    LossResult,
    finite_diff_check,
    hash_distance,
    npairs_loss,
    triplet_loss,
)
from .index import (
    HashIndex,
    QueryResult,
    build_index,
    collision_counts,
    measured_suf,
    nmi,
    precision_at,
    query,
    scan_candidates,
    theoretical_suf,
    theoretical_suf_exact,
)
from .baselines import Codebook, kmeans, th_codes, vq_codes
from .trainer import (
    AdamParams,
    LinearModel,
    SyntheticDataset,
    TrainConfig,
    make_blobs,
    train,
    train_step,
)

__version__ = "0.1.0"

__all__ = [
    "AdamParams",
    "AssignmentProblem",
    "AssignmentSolution",
    "Batch",
    "Codebook",
    "CostOverflowError",
    "EmbeddingSet",
    "FlowNetwork",
    "FlowSolution",
    "HashCode",
    "HashIndex",
    "LinearModel",
    "LossConfig",
    "LossResult",
    "QueryResult",
    "Rng",
    "SparsityConfig",
    "SyntheticDataset",
    "TrainConfig",
    "ValidationError",
    "assign_class_codes",
    "brute_force_assignment",
    "build_flow_network",
    "build_index",
    "canonicalize_labels",
    "check_feasibility",
    "class_means",
    "collision_counts",
    "eval_bound_gap_M",
    "eval_objective_g",
    "eval_upper_bound_g",
    "expand_class_codes",
    "finite_diff_check",
    "hash_distance",
    "kmeans",
    "make_blobs",
    "measured_suf",
    "nmi",
    "npairs_loss",
    "precision_at",
    "query",
    "random_k_sparse_codes",
    "scan_candidates",
    "solve_assignment",
    "solve_mcf",
    "th_codes",
    "theoretical_suf",
    "theoretical_suf_exact",
    "topk_hash",
    "train",
    "train_step",
    "triplet_loss",
    "vq_codes",
]
