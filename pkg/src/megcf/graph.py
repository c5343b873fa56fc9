"""Interaction and tripartite graph construction.

Graphs are stored as CSR-style neighbor lists in both directions, with
per-node degrees precomputed.  Neighbor lists are sorted ascending so that
two builds from permuted edge lists produce identical arrays.  Self-loops
are never stored: the propagation layer adds the self term analytically,
and all degrees count true neighbors only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DanglingEntityError,
    DuplicateEdgeError,
    EmptyGraphError,
    IndexOutOfRangeError,
    ZeroDegreeError,
)


def _csr_from_edges(src, dst, num_src):
    """Sorted CSR (indptr, indices) mapping each src node to its dst list."""
    order = np.lexsort((dst, src))
    degrees = np.bincount(src, minlength=num_src).astype(np.int64)
    indptr = np.zeros(num_src + 1, dtype=np.int64)
    np.cumsum(degrees, out=indptr[1:])
    return indptr, dst[order].copy(), degrees


def _freeze(*arrays):
    for a in arrays:
        a.setflags(write=False)


@dataclass(frozen=True)
class InteractionGraph:
    """User-item bipartite graph with implicit-feedback edges (0/1)."""

    num_users: int
    num_items: int
    edges: np.ndarray  # (E, 2) int64, sorted by (user, item)
    user_indptr: np.ndarray
    user_indices: np.ndarray  # item neighbors per user, ascending
    item_indptr: np.ndarray
    item_indices: np.ndarray  # user neighbors per item, ascending
    user_degrees: np.ndarray
    item_degrees: np.ndarray

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    def user_items(self, u: int) -> np.ndarray:
        return self.user_indices[self.user_indptr[u]:self.user_indptr[u + 1]]

    def item_users(self, i: int) -> np.ndarray:
        return self.item_indices[self.item_indptr[i]:self.item_indptr[i + 1]]


@dataclass(frozen=True)
class TripartiteGraph:
    """Interaction graph fused with item-entity membership edges.

    Item nodes keep their indices from ``g1``, so the downstream embedding
    rows are shared between both graphs.  Each item's neighbor lists are
    kept split by kind (users vs entities); the item's total degree in this
    graph is the sum of both.
    """

    g1: InteractionGraph
    num_entities: int
    item_entity_edges: np.ndarray  # (K, 2) int64, sorted by (item, entity)
    item_entity_indptr: np.ndarray
    item_entity_indices: np.ndarray  # entity neighbors per item, ascending
    entity_indptr: np.ndarray
    entity_indices: np.ndarray  # item neighbors per entity, ascending
    entity_degrees: np.ndarray
    item_entity_degrees: np.ndarray
    item_total_degrees: np.ndarray  # user-side + entity-side degree per item

    @property
    def num_users(self) -> int:
        return self.g1.num_users

    @property
    def num_items(self) -> int:
        return self.g1.num_items

    def item_entities(self, i: int) -> np.ndarray:
        s, e = self.item_entity_indptr[i], self.item_entity_indptr[i + 1]
        return self.item_entity_indices[s:e]

    def entity_items(self, e: int) -> np.ndarray:
        s, t = self.entity_indptr[e], self.entity_indptr[e + 1]
        return self.entity_indices[s:t]


def _check_edges(edges, num_a, num_b, what):
    if edges.shape[0] == 0:
        return
    a, b = edges[:, 0], edges[:, 1]
    if a.min() < 0 or a.max() >= num_a or b.min() < 0 or b.max() >= num_b:
        raise IndexOutOfRangeError(
            f"{what} edge index outside [0,{num_a})x[0,{num_b})")
    order = np.lexsort((b, a))
    sa, sb = a[order], b[order]
    dup = (sa[1:] == sa[:-1]) & (sb[1:] == sb[:-1])
    if dup.any():
        k = int(np.flatnonzero(dup)[0])
        raise DuplicateEdgeError(
            f"duplicate {what} edge ({sa[k]}, {sb[k]})")


def build_interaction_graph(edges, num_users: int, num_items: int) -> InteractionGraph:
    """Build the user-item graph from a list of (user, item) index pairs.

    Duplicate pairs are an error rather than silently collapsed; the
    ingestion layer is responsible for deduplicating raw input.
    """
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.shape[0] == 0:
        raise EmptyGraphError("interaction graph has no edges")
    _check_edges(edges, num_users, num_items, "user-item")

    order = np.lexsort((edges[:, 1], edges[:, 0]))
    edges = edges[order].copy()
    u, i = edges[:, 0], edges[:, 1]
    user_indptr, user_indices, user_degrees = _csr_from_edges(u, i, num_users)
    item_indptr, item_indices, item_degrees = _csr_from_edges(i, u, num_items)
    _freeze(edges, user_indptr, user_indices, item_indptr, item_indices,
            user_degrees, item_degrees)
    return InteractionGraph(
        num_users=num_users, num_items=num_items, edges=edges,
        user_indptr=user_indptr, user_indices=user_indices,
        item_indptr=item_indptr, item_indices=item_indices,
        user_degrees=user_degrees, item_degrees=item_degrees)


def build_tripartite_graph(g1: InteractionGraph, item_entity_edges,
                           num_entities: int) -> TripartiteGraph:
    """Fuse ``g1`` with item-entity edges into the tripartite graph.

    Every entity must have at least one incident item: a zero-degree
    entity would make its aggregation norm undefined, so it is rejected
    here (the ingestion layer drops dangling entities with a warning
    before reaching this builder).
    """
    item_entity_edges = np.asarray(item_entity_edges, dtype=np.int64).reshape(-1, 2)
    if num_entities > 0 and item_entity_edges.shape[0] == 0:
        raise DanglingEntityError(
            f"{num_entities} entities declared but no item-entity edges")
    _check_edges(item_entity_edges, g1.num_items, num_entities, "item-entity")

    if item_entity_edges.shape[0]:
        order = np.lexsort((item_entity_edges[:, 1], item_entity_edges[:, 0]))
        item_entity_edges = item_entity_edges[order].copy()
    i, e = item_entity_edges[:, 0], item_entity_edges[:, 1]
    ie_indptr, ie_indices, ie_degrees = _csr_from_edges(i, e, g1.num_items)
    ent_indptr, ent_indices, ent_degrees = _csr_from_edges(e, i, num_entities)
    if num_entities > 0 and ent_degrees.min() == 0:
        missing = int(np.flatnonzero(ent_degrees == 0)[0])
        raise DanglingEntityError(f"entity {missing} has no incident items")

    item_total = g1.item_degrees + ie_degrees
    _freeze(item_entity_edges, ie_indptr, ie_indices, ent_indptr, ent_indices,
            ent_degrees, ie_degrees, item_total)
    return TripartiteGraph(
        g1=g1, num_entities=num_entities, item_entity_edges=item_entity_edges,
        item_entity_indptr=ie_indptr, item_entity_indices=ie_indices,
        entity_indptr=ent_indptr, entity_indices=ent_indices,
        entity_degrees=ent_degrees, item_entity_degrees=ie_degrees,
        item_total_degrees=item_total)


def edge_norm(deg_target, deg_source, alpha: float):
    """Popularity-aware normalization for one aggregation step.

    Returns ``deg_target**-0.5 * deg_source**-(0.5 - alpha)``: the
    exponent reduction ``alpha`` applies to the message source's degree,
    so larger ``alpha`` makes aggregation more sensitive to popular
    sources.  ``alpha = 0`` recovers the classical symmetric norm.
    """
    if not 0.0 <= alpha < 0.5:
        raise ValueError(f"alpha must lie in [0, 0.5), got {alpha}")
    deg_target = np.asarray(deg_target, dtype=np.float64)
    deg_source = np.asarray(deg_source, dtype=np.float64)
    if (deg_target < 1).any() or (deg_source < 1).any():
        raise ZeroDegreeError("edge_norm requires degrees >= 1")
    out = deg_target ** -0.5 * deg_source ** -(0.5 - alpha)
    if out.ndim == 0:
        return float(out)
    return out
