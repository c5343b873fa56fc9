"""Per-item sentiment scores and the normalized aggregation weights.

Raw scores in [0, 1] (typically mean review sentiment) are smoothed with
an exponent ``gamma`` and normalized so the weights average to exactly 1
over the item set.  The same normalization evaluated at score 1.0 yields
the weight used for user and entity self-loop terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyReviewListError, ScoreOutOfRangeError

# Scores of exactly zero are clamped before exponentiation; upstream
# sentiment models emit scores in the open interval (0, 1).
SCORE_FLOOR = 1e-6


@dataclass(frozen=True)
class SentimentWeights:
    """Normalized per-item aggregation weights w = s**gamma * n / sum(s**gamma)."""

    raw_scores: np.ndarray  # per-item s in [0, 1]
    gamma: float
    weights: np.ndarray  # per-item w, mean exactly 1
    self_loop_weight: float  # w evaluated at s = 1.0
    enabled: bool

    @property
    def num_items(self) -> int:
        return self.raw_scores.shape[0]


def aggregate_review_scores(per_review_scores) -> np.ndarray:
    """Mean review score per item.

    Args:
        per_review_scores: sequence of per-item score lists; every item
            must carry at least one score, each in [0, 1].
    """
    out = np.empty(len(per_review_scores), dtype=np.float64)
    for idx, scores in enumerate(per_review_scores):
        arr = np.asarray(scores, dtype=np.float64)
        if arr.size == 0:
            raise EmptyReviewListError(
                f"item {idx} has no review scores; supply a score or "
                "disable sentiment weighting")
        if (arr < 0).any() or (arr > 1).any():
            raise ScoreOutOfRangeError(
                f"item {idx} has review scores outside [0, 1]")
        out[idx] = arr.mean()
    return out


def normalize_weights(raw_scores, gamma: float, enabled: bool = True) -> SentimentWeights:
    """Turn raw per-item scores into aggregation weights.

    When ``enabled`` is false (datasets without reviews, or the sentiment
    ablation) every weight and the self-loop weight are exactly 1.0.
    """
    raw_scores = np.asarray(raw_scores, dtype=np.float64)
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    if raw_scores.size and ((raw_scores < 0).any() or (raw_scores > 1).any()):
        raise ScoreOutOfRangeError("sentiment scores must lie in [0, 1]")
    n = raw_scores.shape[0]
    if not enabled:
        weights = np.ones(n, dtype=np.float64)
        self_w = 1.0
    else:
        clamped = np.maximum(raw_scores, SCORE_FLOOR)
        powered = clamped ** gamma
        denom = powered.sum()
        weights = powered * (n / denom)
        # Self-loop terms plug s = 1.0 into the same normalization; the
        # denominator ranges over the real items only.
        self_w = float(n / denom)
    weights.setflags(write=False)
    frozen = raw_scores.copy()
    frozen.setflags(write=False)
    return SentimentWeights(raw_scores=frozen, gamma=float(gamma),
                            weights=weights, self_loop_weight=self_w,
                            enabled=enabled)
