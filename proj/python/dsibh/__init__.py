"""Supervised information-bottleneck hashing for cross-modal retrieval."""

from ._core import (
    CodeDB,
    FormatError,
    Mlp,
    NumericError,
    UndefinedMetric,
    UnsupportedOrder,
    consistency_loss,
    encode,
    entropy,
    generate_synthetic,
    gram,
    hamming_distance,
    joint_entropy,
    labnet_loss,
    mean_average_precision,
    mi_gradient,
    mi_median_bandwidth,
    mutual_information,
    retrieve,
    select_sigma,
    similarity_from_labels,
    split_tags,
    train,
    weighted_ce_loss,
)

__all__ = [
    "CodeDB",
    "FormatError",
    "Mlp",
    "NumericError",
    "UndefinedMetric",
    "UnsupportedOrder",
    "consistency_loss",
    "encode",
    "entropy",
    "generate_synthetic",
    "gram",
    "hamming_distance",
    "joint_entropy",
    "labnet_loss",
    "mean_average_precision",
    "mi_gradient",
    "mi_median_bandwidth",
    "mutual_information",
    "retrieve",
    "select_sigma",
    "similarity_from_labels",
    "split_tags",
    "train",
    "weighted_ce_loss",
]
