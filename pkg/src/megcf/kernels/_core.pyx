# cython: boundscheck=False, wraparound=False, cdivision=True
"""CSR sparse-times-dense kernel used by graph propagation.

Rows are computed independently (sequential accumulation within a row),
so the result is bitwise identical for any thread count and matches the
scipy fallback, which walks the same index order.
"""

import numpy as np

cimport numpy as cnp
from cython.parallel cimport prange

cnp.import_array()


def csr_matmul(const long long[::1] indptr,
               const long long[::1] indices,
               const double[::1] data,
               const double[:, ::1] x,
               int num_threads):
    """Return A @ x for the CSR matrix (indptr, indices, data)."""
    cdef Py_ssize_t n_rows = indptr.shape[0] - 1
    cdef Py_ssize_t d = x.shape[1]
    out_arr = np.zeros((n_rows, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, jj, k
    cdef long long j
    cdef double a

    if num_threads > 1:
        for i in prange(n_rows, nogil=True, schedule='static',
                        num_threads=num_threads):
            for jj in range(indptr[i], indptr[i + 1]):
                j = indices[jj]
                a = data[jj]
                for k in range(d):
                    out[i, k] = out[i, k] + a * x[j, k]
    else:
        with nogil:
            for i in range(n_rows):
                for jj in range(indptr[i], indptr[i + 1]):
                    j = indices[jj]
                    a = data[jj]
                    for k in range(d):
                        out[i, k] = out[i, k] + a * x[j, k]
    return out_arr
