"""Sparse-graph collaborative filtering over user-item-entity graphs.

Two symmetric linear graph-convolution branches share one embedding
table: one propagates over the user-item interaction graph, the other
over the tripartite graph that adds multimodal semantic entities.
Neighbor aggregation is scaled by review-sentiment weights and a
popularity-aware normalization; training jointly optimizes a pairwise
ranking loss per branch with analytically derived gradients.
"""

__version__ = "0.1.0"

from . import (  # noqa: F401
    baselines,
    evaluation,
    graph,
    ingestion,
    kernels,
    propagation,
    sentiment,
    training,
)
