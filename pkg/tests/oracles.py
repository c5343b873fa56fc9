"""Independent brute-force references used by the tests.

Everything here is deliberately written from the aggregation rules with
plain Python loops and dense matrices, not by calling the package's
assembly paths, so the sparse engine is checked against a second route.
"""

import math

import numpy as np


def dense_sentiment_weights(scores, gamma):
    """Closed-form weights recomputed with scalar math."""
    n = len(scores)
    powered = [max(s, 1e-6) ** gamma for s in scores]
    denom = math.fsum(powered)
    return [p * n / denom for p in powered], n / denom


def dense_g1_matrix(edges, num_users, num_items, weights=None, self_w=1.0,
                    alpha=0.0):
    """Dense propagation matrix over [users; items] built edge by edge.

    Item rows apply the item's own weight to every term (self included);
    user rows apply each source item's weight and ``self_w`` for their
    own self term.
    """
    n = num_users + num_items
    du = [0] * num_users
    di = [0] * num_items
    for u, i in edges:
        du[u] += 1
        di[i] += 1
    w = weights if weights is not None else [1.0] * num_items
    mat = np.zeros((n, n))
    for u, i in edges:
        mat[u, num_users + i] = w[i] * du[u] ** -0.5 * di[i] ** -(0.5 - alpha)
        mat[num_users + i, u] = w[i] * di[i] ** -0.5 * du[u] ** -(0.5 - alpha)
    for u in range(num_users):
        d = max(du[u], 1)
        mat[u, u] = self_w * d ** -0.5 * d ** -(0.5 - alpha)
    for i in range(num_items):
        d = max(di[i], 1)
        mat[num_users + i, num_users + i] = \
            w[i] * d ** -0.5 * d ** -(0.5 - alpha)
    return mat


def dense_g2_matrix(edges, item_entity_edges, num_users, num_items,
                    num_entities, weights=None, self_w=1.0, alpha=0.0):
    """Dense propagation matrix over [users; items; entities].

    Item degrees count user and entity neighbors together; each item row
    carries exactly one self term normalized by that total degree.
    """
    n = num_users + num_items + num_entities
    du = [0] * num_users
    di = [0] * num_items
    de = [0] * num_entities
    for u, i in edges:
        du[u] += 1
        di[i] += 1
    for i, e in item_entity_edges:
        di[i] += 1
        de[e] += 1
    w = weights if weights is not None else [1.0] * num_items
    mat = np.zeros((n, n))
    off_i = num_users
    off_e = num_users + num_items
    for u, i in edges:
        mat[u, off_i + i] = w[i] * du[u] ** -0.5 * di[i] ** -(0.5 - alpha)
        mat[off_i + i, u] = w[i] * di[i] ** -0.5 * du[u] ** -(0.5 - alpha)
    for i, e in item_entity_edges:
        mat[off_i + i, off_e + e] = \
            w[i] * di[i] ** -0.5 * de[e] ** -(0.5 - alpha)
        mat[off_e + e, off_i + i] = \
            w[i] * de[e] ** -0.5 * di[i] ** -(0.5 - alpha)
    for u in range(num_users):
        d = max(du[u], 1)
        mat[u, u] = self_w * d ** -0.5 * d ** -(0.5 - alpha)
    for i in range(num_items):
        d = max(di[i], 1)
        mat[off_i + i, off_i + i] = w[i] * d ** -0.5 * d ** -(0.5 - alpha)
    for e in range(num_entities):
        d = max(de[e], 1)
        mat[off_e + e, off_e + e] = self_w * d ** -0.5 * d ** -(0.5 - alpha)
    return mat


def naive_rank(scores):
    """Mid-rank of candidate 0 among all candidates, by explicit count."""
    pos = scores[0]
    greater = sum(1 for s in scores[1:] if s > pos)
    ties = sum(1 for s in scores[1:] if s == pos)
    return 1.0 + greater + ties / 2.0


def naive_hr(ranks, k):
    return math.fsum(1.0 for r in ranks if r <= k) / len(ranks)


def naive_ndcg(ranks, k):
    return math.fsum(1.0 / math.log2(r + 1.0)
                     for r in ranks if r <= k) / len(ranks)


def central_difference_gradient(fn, params, step=1e-5):
    """Dense central-difference gradient of a scalar function."""
    grad = np.zeros_like(params)
    flat = params.ravel()
    gflat = grad.ravel()
    for idx in range(flat.size):
        orig = flat[idx]
        flat[idx] = orig + step
        fplus = fn(params)
        flat[idx] = orig - step
        fminus = fn(params)
        flat[idx] = orig
        gflat[idx] = (fplus - fminus) / (2.0 * step)
    return grad


def random_tripartite(rng, max_users=4, max_items=5, max_entities=3):
    """Small random graph where every node has at least one neighbor.

    Every user also leaves at least one item non-interacted, so negative
    sampling stays feasible.
    """
    nu = int(rng.integers(2, max_users + 1))
    ni = int(rng.integers(3, max_items + 1))
    ne = int(rng.integers(1, max_entities + 1))
    edges = set()
    for u in range(nu):
        count = int(rng.integers(1, ni - 1))
        for i in rng.choice(ni, size=count, replace=False):
            edges.add((u, int(i)))
    for i in range(ni):
        if not any(e[1] == i for e in edges):
            u = int(rng.integers(0, nu))
            if sum(1 for e in edges if e[0] == u) >= ni - 1:
                continue
            edges.add((u, i))
    ie = set()
    for e in range(ne):
        for i in rng.choice(ni, size=int(rng.integers(1, 3)), replace=False):
            ie.add((int(i), e))
    return sorted(edges), sorted(ie), nu, ni, ne
