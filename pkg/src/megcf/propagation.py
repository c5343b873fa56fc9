"""Sentiment-weighted linear graph convolution: forward and transposed.

A :class:`PropagationPlan` freezes one graph's per-edge coefficients
(sentiment weight x popularity-aware norm) together with the analytic
self-loop coefficients into a CSR matrix, so one propagation layer is a
single sparse-times-dense product and the backward pass is the same
product with the transposed matrix.

Weighting is deliberately asymmetric, following the aggregation rules:
item rows apply the target item's own weight to every incoming message
(self term included), while user and entity rows apply each source
item's weight and use the weight of a perfect score (1.0) for their own
self term.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import (
    NonFiniteEmbeddingError,
    NonFiniteGradientError,
)
from .graph import InteractionGraph, TripartiteGraph, edge_norm
from .sentiment import SentimentWeights


class EmbeddingTable:
    """Dense d-dimensional vectors for every node; the only trainable state.

    User, item, and entity rows live in one (N, d) array in that order,
    so both graph branches read the same user/item rows.
    """

    def __init__(self, data: np.ndarray, n_users: int, n_items: int,
                 n_entities: int = 0):
        data = np.asarray(data, dtype=np.float64)
        if data.shape[0] != n_users + n_items + n_entities:
            raise ValueError("row count does not match node counts")
        self.data = data
        self.n_users = n_users
        self.n_items = n_items
        self.n_entities = n_entities

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    @property
    def users(self) -> np.ndarray:
        return self.data[:self.n_users]

    @property
    def items(self) -> np.ndarray:
        return self.data[self.n_users:self.n_users + self.n_items]

    @property
    def entities(self) -> np.ndarray:
        return self.data[self.n_users + self.n_items:]

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(self.data.copy(), self.n_users, self.n_items,
                              self.n_entities)

    @classmethod
    def xavier(cls, n_users: int, n_items: int, n_entities: int, dim: int,
               rng: np.random.Generator) -> "EmbeddingTable":
        """Glorot-uniform init, one draw per sub-table (users, items, entities)."""
        parts = []
        for rows in (n_users, n_items, n_entities):
            if rows == 0:
                parts.append(np.empty((0, dim)))
                continue
            limit = np.sqrt(6.0 / (rows + dim))
            parts.append(rng.uniform(-limit, limit, size=(rows, dim)))
        return cls(np.vstack(parts), n_users, n_items, n_entities)


@dataclass(frozen=True)
class PropagationPlan:
    """Frozen per-edge and per-node coefficients for one graph."""

    graph: object
    n_nodes: int
    n_users: int
    n_items: int
    n_entities: int
    alpha: float
    layers: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    t_indptr: np.ndarray = field(repr=False, default=None)
    t_indices: np.ndarray = field(repr=False, default=None)
    t_data: np.ndarray = field(repr=False, default=None)
    self_coeffs: np.ndarray = field(repr=False, default=None)


def _coo_to_csr(n: int, rows, cols, vals):
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return indptr, np.ascontiguousarray(cols), np.ascontiguousarray(vals)


def _self_norm(degrees: np.ndarray, alpha: float) -> np.ndarray:
    # Isolated nodes (possible for items after the leave-one-out split)
    # keep a unit pass-through self term.
    d = np.maximum(degrees, 1)
    return edge_norm(d, d, alpha)


def _assemble(n, n_users, n_items, n_entities, graph, alpha, layers,
              rows, cols, vals, self_vals):
    rows = np.concatenate([rows, np.arange(n, dtype=np.int64)])
    cols = np.concatenate([cols, np.arange(n, dtype=np.int64)])
    vals = np.concatenate([vals, self_vals])
    if not np.isfinite(vals).all() or (vals <= 0).any():
        raise NonFiniteEmbeddingError(
            "propagation coefficients must be positive and finite")
    indptr, indices, data = _coo_to_csr(n, rows, cols, vals)
    t_indptr, t_indices, t_data = _coo_to_csr(n, cols, rows, vals)
    for a in (indptr, indices, data, t_indptr, t_indices, t_data, self_vals):
        a.setflags(write=False)
    return PropagationPlan(
        graph=graph, n_nodes=n, n_users=n_users, n_items=n_items,
        n_entities=n_entities, alpha=alpha, layers=layers,
        indptr=indptr, indices=indices, data=data,
        t_indptr=t_indptr, t_indices=t_indices, t_data=t_data,
        self_coeffs=self_vals)


def build_g1_plan(graph: InteractionGraph, weights: SentimentWeights | None,
                  alpha: float, layers: int = 1) -> PropagationPlan:
    """Plan for the user-item branch.

    ``weights=None`` removes the sentiment multiplications structurally;
    a disabled :class:`SentimentWeights` multiplies by exactly 1.0 and
    produces bit-identical coefficients.
    """
    nu, ni = graph.num_users, graph.num_items
    n = nu + ni
    u, i = graph.edges[:, 0], graph.edges[:, 1]
    du = graph.user_degrees[u].astype(np.float64)
    di = graph.item_degrees[i].astype(np.float64)

    # user rows aggregate item messages; item rows aggregate user messages
    user_vals = edge_norm(du, di, alpha)
    item_vals = edge_norm(di, du, alpha)
    user_self = _self_norm(graph.user_degrees, alpha)
    item_self = _self_norm(graph.item_degrees, alpha)
    if weights is not None:
        w = weights.weights
        user_vals = w[i] * user_vals       # source item's weight
        item_vals = w[i] * item_vals       # target item's own weight
        user_self = weights.self_loop_weight * user_self
        item_self = w * item_self

    rows = np.concatenate([u, nu + i])
    cols = np.concatenate([nu + i, u])
    vals = np.concatenate([user_vals, item_vals])
    self_vals = np.concatenate([user_self, item_self])
    return _assemble(n, nu, ni, 0, graph, alpha, layers,
                     rows, cols, vals, self_vals)


def build_g2_plan(tgraph: TripartiteGraph, weights: SentimentWeights | None,
                  alpha: float, layers: int = 1) -> PropagationPlan:
    """Plan for the tripartite branch (users, items, entities).

    Item degrees here count both user and entity neighbors; the single
    item self term uses that total degree.
    """
    g1 = tgraph.g1
    nu, ni, ne = g1.num_users, g1.num_items, tgraph.num_entities
    n = nu + ni + ne
    u, i = g1.edges[:, 0], g1.edges[:, 1]
    it, e = tgraph.item_entity_edges[:, 0], tgraph.item_entity_edges[:, 1]

    du = g1.user_degrees[u].astype(np.float64)
    dgi = tgraph.item_total_degrees[i].astype(np.float64)
    dgi_e = tgraph.item_total_degrees[it].astype(np.float64)
    de = tgraph.entity_degrees[e].astype(np.float64)

    user_vals = edge_norm(du, dgi, alpha)          # user <- item
    item_u_vals = edge_norm(dgi, du, alpha)        # item <- user
    item_e_vals = edge_norm(dgi_e, de, alpha)      # item <- entity
    ent_vals = edge_norm(de, dgi_e, alpha)         # entity <- item
    user_self = _self_norm(g1.user_degrees, alpha)
    item_self = _self_norm(tgraph.item_total_degrees, alpha)
    ent_self = _self_norm(tgraph.entity_degrees, alpha)
    if weights is not None:
        w = weights.weights
        user_vals = w[i] * user_vals
        item_u_vals = w[i] * item_u_vals
        item_e_vals = w[it] * item_e_vals
        ent_vals = w[it] * ent_vals
        user_self = weights.self_loop_weight * user_self
        item_self = w * item_self
        ent_self = weights.self_loop_weight * ent_self

    rows = np.concatenate([u, nu + i, nu + it, nu + ni + e])
    cols = np.concatenate([nu + i, u, nu + ni + e, nu + it])
    vals = np.concatenate([user_vals, item_u_vals, item_e_vals, ent_vals])
    self_vals = np.concatenate([user_self, item_self, ent_self])
    return _assemble(n, nu, ni, ne, tgraph, alpha, layers,
                     rows, cols, vals, self_vals)


def _check_finite(x: np.ndarray, err, what: str) -> None:
    if not np.isfinite(x).all():
        raise err(f"{what} contains non-finite values")


def propagate(emb: np.ndarray, plan: PropagationPlan) -> np.ndarray:
    """One propagation layer: weighted neighbor sum plus the self term."""
    if emb.shape[0] != plan.n_nodes:
        raise ValueError(
            f"embedding rows {emb.shape[0]} != plan nodes {plan.n_nodes}")
    out = kernels.csr_matmul(plan.indptr, plan.indices, plan.data, emb,
                             plan.n_nodes)
    _check_finite(out, NonFiniteEmbeddingError, "propagated embedding")
    return out


def forward(emb0: np.ndarray, plan: PropagationPlan, layers: int) -> list[np.ndarray]:
    """Run ``layers`` propagation steps, retaining every intermediate layer.

    The final representation is the last layer only; intermediate layers
    are kept for the backward pass.  ``layers=0`` returns just the input
    (the no-propagation baseline).
    """
    if layers < 0:
        raise ValueError("layers must be >= 0")
    out = [np.ascontiguousarray(emb0, dtype=np.float64)]
    for _ in range(layers):
        out.append(propagate(out[-1], plan))
    return out


def backward(grad_last: np.ndarray, plan: PropagationPlan, layers: int) -> np.ndarray:
    """Pull a gradient at the last layer back to layer 0.

    Each forward layer is linear, so the gradient is the transposed
    coefficient matrix applied ``layers`` times.
    """
    g = np.ascontiguousarray(grad_last, dtype=np.float64)
    for _ in range(layers):
        g = kernels.csr_matmul(plan.t_indptr, plan.t_indices, plan.t_data, g,
                               plan.n_nodes)
    _check_finite(g, NonFiniteGradientError, "backpropagated gradient")
    return g
