"""Backend selection for the sparse propagation kernel.

The compiled Cython core is preferred when its extension module built;
otherwise the scipy-based fallback is used.  Both walk CSR rows in index
order with sequential accumulation, so they agree bitwise.  Tests and the
benchmark can force a backend with :func:`set_backend`.

The only environment knob is ``MEGCF_NUM_THREADS``, which sets the row
partitioning of the compiled kernel (results are independent of it).
"""

from __future__ import annotations

import os

import numpy as np
import scipy.sparse as sp

try:
    from . import _core as _compiled
except ImportError:
    _compiled = None

_FORCED: str | None = None


def available_backends() -> tuple[str, ...]:
    return ("compiled", "python") if _compiled is not None else ("python",)


def backend_name() -> str:
    if _FORCED is not None:
        return _FORCED
    return "compiled" if _compiled is not None else "python"


def set_backend(name: str | None) -> None:
    """Force "compiled" or "python"; None restores automatic selection."""
    global _FORCED
    if name is None:
        _FORCED = None
        return
    if name not in ("compiled", "python"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "compiled" and _compiled is None:
        raise RuntimeError("compiled kernel extension is not available")
    _FORCED = name


def num_threads() -> int:
    try:
        n = int(os.environ.get("MEGCF_NUM_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def csr_matmul(indptr: np.ndarray, indices: np.ndarray, data: np.ndarray,
               x: np.ndarray, n_cols: int) -> np.ndarray:
    """Multiply the CSR matrix (n_rows x n_cols) by the dense matrix x."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if backend_name() == "compiled":
        return _compiled.csr_matmul(indptr, indices, data, x, num_threads())
    mat = sp.csr_matrix((data, indices, indptr),
                        shape=(indptr.shape[0] - 1, n_cols), copy=False)
    return mat.dot(x)
