"""Compiled kernels with a fixed per-element reduction order.

Rows of the output are distributed across threads, but every output entry is
accumulated by a single thread in ascending inner-index order, so results are
bit-identical for any thread count.
"""

import os
import warnings

import numba
import numpy as np
from numba import njit, prange

# TBB in this image is too old; numba warns while probing it.
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


@njit(parallel=True, cache=True, nogil=True)
def dense_matmul(a, b, out):
    rows, inner = a.shape
    cols = b.shape[1]
    for i in prange(rows):
        for j in range(cols):
            acc = 0j
            for k in range(inner):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc


@njit(parallel=True, cache=True, nogil=True)
def csr_matmul(indptr, indices, data, x, out):
    rows = indptr.shape[0] - 1
    cols = x.shape[1]
    for i in prange(rows):
        for j in range(cols):
            acc = 0j
            for p in range(indptr[i], indptr[i + 1]):
                acc += data[p] * x[indices[p], j]
            out[i, j] = acc


def set_workers(n=None):
    """Cap kernel threads at ``n`` (default: the ``NN_WORKERS`` env var)."""
    if n is None:
        env = os.environ.get("NN_WORKERS")
        if not env:
            return numba.get_num_threads()
        n = int(env)
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", numba.NumbaWarning)
        numba.set_num_threads(n)
    return n


def matmul_into(a, b):
    out = np.empty((a.shape[0], b.shape[1]), dtype=np.complex128)
    dense_matmul(a, b, out)
    return out


def csr_matmul_into(indptr, indices, data, x):
    out = np.empty((indptr.shape[0] - 1, x.shape[1]), dtype=np.complex128)
    csr_matmul(indptr, indices, data, x, out)
    return out
