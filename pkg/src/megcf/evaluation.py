"""Leave-one-out evaluation: splits, candidate ranking, HR@k and NDCG@k.

Each user holds out one test and one validation item; the remaining
interactions train the model.  At evaluation time the held-out item is
ranked against 99 negatives frozen at split time, so every model variant
scores identical candidate sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    NonFiniteScoreError,
    TooFewCandidatesError,
    TooFewInteractionsError,
)

NUM_NEGATIVES = 99


@dataclass(frozen=True)
class EvalSplit:
    num_users: int
    num_items: int
    test_items: np.ndarray  # (num_users,)
    val_items: np.ndarray  # (num_users,)
    train_edges: np.ndarray  # (E', 2), canonical order
    negatives: np.ndarray  # (num_users, NUM_NEGATIVES)


def make_split(edges, num_users: int, num_items: int,
               rng: np.random.Generator,
               num_negatives: int = NUM_NEGATIVES) -> EvalSplit:
    """Per-user holdout of one test and one validation item plus negatives.

    Negatives are sampled from the items the user never interacted with,
    which also excludes the held-out pair, and are persisted with the
    split so later evaluations reuse them.
    """
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    edges = edges[order]
    degrees = np.bincount(edges[:, 0], minlength=num_users)
    if degrees.min() < 5:
        u = int(np.argmin(degrees))
        raise TooFewInteractionsError(
            f"user {u} has {int(degrees[u])} interactions; the split "
            "requires at least 5 (apply 5-core filtering first)")

    indptr = np.zeros(num_users + 1, dtype=np.int64)
    np.cumsum(degrees, out=indptr[1:])
    test = np.empty(num_users, dtype=np.int64)
    val = np.empty(num_users, dtype=np.int64)
    negs = np.empty((num_users, num_negatives), dtype=np.int64)
    held = np.zeros(edges.shape[0], dtype=bool)
    all_items = np.arange(num_items, dtype=np.int64)

    for u in range(num_users):
        lo, hi = indptr[u], indptr[u + 1]
        items = edges[lo:hi, 1]
        pool = np.setdiff1d(all_items, items, assume_unique=False)
        if pool.size < num_negatives:
            raise TooFewCandidatesError(
                f"user {u} has only {pool.size} non-interacted items; "
                f"{num_negatives} negatives required")
        pick = rng.choice(hi - lo, size=2, replace=False)
        test[u] = items[pick[0]]
        val[u] = items[pick[1]]
        held[lo + pick[0]] = held[lo + pick[1]] = True
        negs[u] = np.sort(rng.choice(pool, size=num_negatives, replace=False))

    train_edges = edges[~held].copy()
    for a in (test, val, negs, train_edges):
        a.setflags(write=False)
    return EvalSplit(num_users=num_users, num_items=num_items,
                     test_items=test, val_items=val,
                     train_edges=train_edges, negatives=negs)


def rank_candidates(scores, positive_index: int = 0) -> float:
    """1-based rank of the positive among the candidates.

    Ties with the positive take the mid-rank (the expected rank under a
    random permutation of the tied block).
    """
    scores = np.asarray(scores, dtype=np.float64)
    if not np.isfinite(scores).all():
        raise NonFiniteScoreError("candidate scores must be finite")
    pos = scores[positive_index]
    rest = np.delete(scores, positive_index)
    greater = int((rest > pos).sum())
    ties = int((rest == pos).sum())
    return 1.0 + greater + ties / 2.0


def hr_at_k(ranks, k: int) -> float:
    """Fraction of ranking events whose positive lands in the top k."""
    ranks = list(ranks)
    return math.fsum(1.0 for r in ranks if r <= k) / len(ranks)


def ndcg_at_k(ranks, k: int) -> float:
    """Mean position-discounted gain, single-relevant-item form."""
    ranks = list(ranks)
    return math.fsum(
        1.0 / math.log2(r + 1.0) for r in ranks if r <= k) / len(ranks)


def rank_events(branch_reps, split: EvalSplit, which: str = "test") -> np.ndarray:
    """Rank every user's held-out item against their frozen negatives.

    Args:
        branch_reps: [(user_reps, item_reps), ...] per branch; disabled
            branches carry (None, None).  Scores are summed over branches.
        which: "test" or "validation".
    """
    positives = split.test_items if which == "test" else split.val_items
    ranks = np.empty(split.num_users, dtype=np.float64)
    cols = np.concatenate([positives[:, None], split.negatives], axis=1)
    scores = np.zeros(cols.shape, dtype=np.float64)
    for user_reps, item_reps in branch_reps:
        if user_reps is None:
            continue
        cand = item_reps[cols]  # (num_users, 100, d)
        scores += np.einsum("ud,ucd->uc", user_reps, cand)
    for u in range(split.num_users):
        ranks[u] = rank_candidates(scores[u], positive_index=0)
    return ranks


def metrics_table(ranks, ks=(5, 10, 20)) -> dict[str, float]:
    out = {}
    for k in ks:
        out[f"hr@{k}"] = hr_at_k(ranks, k)
        out[f"ndcg@{k}"] = ndcg_at_k(ranks, k)
    return out
