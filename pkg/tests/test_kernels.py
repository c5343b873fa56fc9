import os

import numpy as np
import pytest
import scipy.sparse as sp

from megcf import kernels


def random_csr(rng, n_rows, n_cols, density=0.3):
    mat = sp.random(n_rows, n_cols, density=density, random_state=42,
                    format="csr", dtype=np.float64)
    mat.sort_indices()
    return mat


@pytest.fixture
def restore_backend():
    yield
    kernels.set_backend(None)


def _call(mat, x):
    return kernels.csr_matmul(mat.indptr.astype(np.int64),
                              mat.indices.astype(np.int64),
                              mat.data, x, mat.shape[1])


def test_matches_scipy_reference():
    rng = np.random.default_rng(0)
    for _ in range(10):
        mat = random_csr(rng, 15, 12)
        x = rng.normal(size=(12, 4))
        np.testing.assert_allclose(_call(mat, x), mat @ x, atol=1e-13)


@pytest.mark.skipif(len(kernels.available_backends()) < 2,
                    reason="compiled kernel not built")
def test_backends_agree_bitwise(restore_backend):
    rng = np.random.default_rng(1)
    for _ in range(10):
        mat = random_csr(rng, 30, 30, density=0.2)
        x = rng.normal(size=(30, 8))
        kernels.set_backend("compiled")
        a = _call(mat, x)
        kernels.set_backend("python")
        b = _call(mat, x)
        np.testing.assert_array_equal(a, b)


@pytest.mark.skipif(len(kernels.available_backends()) < 2,
                    reason="compiled kernel not built")
def test_thread_count_does_not_change_bits(restore_backend):
    rng = np.random.default_rng(2)
    mat = random_csr(rng, 64, 64, density=0.1)
    x = rng.normal(size=(64, 16))
    kernels.set_backend("compiled")
    outs = []
    for n in ("1", "2", "4"):
        os.environ["MEGCF_NUM_THREADS"] = n
        outs.append(_call(mat, x))
    del os.environ["MEGCF_NUM_THREADS"]
    np.testing.assert_array_equal(outs[0], outs[1])
    np.testing.assert_array_equal(outs[0], outs[2])


def test_forced_unknown_backend_rejected():
    with pytest.raises(ValueError):
        kernels.set_backend("cuda")
