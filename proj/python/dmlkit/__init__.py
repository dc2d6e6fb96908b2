"""Two-head metric-learning toolkit.

The heavy lifting lives in the C++ extension module; this package re-exports
its operations: embedding geometry, the ranking/regularizer losses, triplet
miners, the PK sampler, retrieval metrics and a compact training entry point.
"""

from dmlkit._core import (
    DmlError,
    accuracy,
    classify_negative,
    combined_loss,
    center_loss,
    enumerate_all_triplets,
    gen_long_tail,
    gen_synthetic,
    gradcheck,
    kmeans,
    l2_normalize,
    lr_schedule,
    magnet_loss,
    mine_batch_hard,
    mine_semi_hard,
    nmi,
    pairwise_sq_distances,
    pk_sample,
    recall_at_k,
    sod_encode,
    softmax_ce,
    tcl_loss,
    train_two_head,
    triplet_loss,
    update_centers,
)

__all__ = [
    "DmlError",
    "accuracy",
    "classify_negative",
    "combined_loss",
    "center_loss",
    "enumerate_all_triplets",
    "gen_long_tail",
    "gen_synthetic",
    "gradcheck",
    "kmeans",
    "l2_normalize",
    "lr_schedule",
    "magnet_loss",
    "mine_batch_hard",
    "mine_semi_hard",
    "nmi",
    "pairwise_sq_distances",
    "pk_sample",
    "recall_at_k",
    "sod_encode",
    "softmax_ce",
    "tcl_loss",
    "train_two_head",
    "triplet_loss",
    "update_centers",
]
