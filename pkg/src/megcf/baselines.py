"""Internal reference propagation: classic symmetric-norm linear GCN.

Independent of the plan builders in :mod:`megcf.propagation`; used to
verify that the engine collapses to the classic behavior when entities,
sentiment weighting, and the popularity exponent are all switched off.
Assembly goes through scipy's canonical CSR form, while the multiply uses
the shared kernel so the comparison is exact.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from . import kernels
from .graph import InteractionGraph, edge_norm


def lightgcn_matrix(graph: InteractionGraph) -> sp.csr_matrix:
    """Symmetric-normalized user-item adjacency with unit self-loops.

    Degrees count true neighbors only; each node's self term is normalized
    by its own degree on both sides, matching the engine's convention.
    """
    nu, ni = graph.num_users, graph.num_items
    n = nu + ni
    u = graph.edges[:, 0]
    i = graph.edges[:, 1]
    du = graph.user_degrees[u].astype(np.float64)
    di = graph.item_degrees[i].astype(np.float64)

    rows = np.concatenate([u, nu + i, np.arange(n, dtype=np.int64)])
    cols = np.concatenate([nu + i, u, np.arange(n, dtype=np.int64)])
    deg_all = np.concatenate([graph.user_degrees, graph.item_degrees])
    vals = np.concatenate([
        edge_norm(du, di, 0.0),
        edge_norm(di, du, 0.0),
        edge_norm(np.maximum(deg_all, 1), np.maximum(deg_all, 1), 0.0),
    ])
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    mat.sort_indices()
    return mat


def lightgcn_forward(graph: InteractionGraph, emb0: np.ndarray,
                     layers: int) -> np.ndarray:
    """Propagate ``layers`` times and return the last layer only."""
    mat = lightgcn_matrix(graph)
    x = np.ascontiguousarray(emb0, dtype=np.float64)
    indptr = mat.indptr.astype(np.int64)
    indices = mat.indices.astype(np.int64)
    for _ in range(layers):
        x = kernels.csr_matmul(indptr, indices, mat.data, x, mat.shape[1])
    return x
