"""Hot inner loops, compiled with numba when available.

Set ``SURFDMK_DISABLE_NUMBA=1`` before import to force the pure
numpy/scipy path.  Both paths are always importable as ``NUMPY`` and
``NUMBA`` (the latter is ``None`` when numba is missing) so benchmarks and
tests can compare them in one process.

All triangular kernels work on a lower-triangular CSR matrix whose rows
have sorted column indices with the diagonal stored last.
"""

from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import spsolve_triangular

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and os.environ.get("SURFDMK_DISABLE_NUMBA", "").lower() not in (
    "1",
    "true",
    "yes",
)


def _ic0_rows(n, indptr, indices, data, out, pivot_tol):
    """Row-by-row IC(0) restricted to the pattern of ``data``.

    Writes the factor into ``out`` and returns ``-1`` on success or the
    index of the first row whose pivot is not positive.
    """
    for i in range(n):
        start, end = indptr[i], indptr[i + 1]
        diag_pos = end - 1
        for p in range(start, diag_pos):
            k = indices[p]
            # dot product of row i and row k over columns < k
            s = 0.0
            q = indptr[k]
            q_end = indptr[k + 1] - 1
            pi = start
            while pi < p and q < q_end:
                ci = indices[pi]
                ck = indices[q]
                if ci == ck:
                    s += out[pi] * out[q]
                    pi += 1
                    q += 1
                elif ci < ck:
                    pi += 1
                else:
                    q += 1
            out[p] = (data[p] - s) / out[indptr[k + 1] - 1]
        s = 0.0
        for p in range(start, diag_pos):
            s += out[p] * out[p]
        pivot = data[diag_pos] - s
        if not pivot > pivot_tol * data[diag_pos]:
            return i
        out[diag_pos] = pivot**0.5
    return -1


def _forward_rows(indptr, indices, data, b):
    n = indptr.shape[0] - 1
    y = b.copy()
    for i in range(n):
        s = y[i]
        for p in range(indptr[i], indptr[i + 1] - 1):
            s -= data[p] * y[indices[p]]
        y[i] = s / data[indptr[i + 1] - 1]
    return y


def _backward_rows(indptr, indices, data, y):
    # solves L^T x = y, reading L by rows as the columns of L^T
    n = indptr.shape[0] - 1
    x = y.copy()
    for i in range(n - 1, -1, -1):
        xi = x[i] / data[indptr[i + 1] - 1]
        x[i] = xi
        for p in range(indptr[i], indptr[i + 1] - 1):
            x[indices[p]] -= data[p] * xi
    return x


def _scatter_add_loop(index, values, n):
    out = np.zeros(n)
    for k in range(index.shape[0]):
        out[index[k]] += values[k]
    return out


def _ic0_numpy(indptr, indices, data, pivot_tol=1e-12):
    # plain lists avoid numpy scalar overhead in the interpreted loop
    out = [0.0] * len(data)
    fail = _ic0_rows(len(indptr) - 1, indptr.tolist(), indices.tolist(), data.tolist(), out, pivot_tol)
    return np.asarray(out, dtype=np.float64), fail


def _as_csr(indptr, indices, data):
    n = len(indptr) - 1
    return csr_matrix((data, indices, indptr), shape=(n, n))


def _forward_numpy(indptr, indices, data, b):
    return spsolve_triangular(_as_csr(indptr, indices, data), b, lower=True)


def _backward_numpy(indptr, indices, data, y):
    return spsolve_triangular(_as_csr(indptr, indices, data).T.tocsr(), y, lower=False)


def _scatter_add_numpy(index, values, n):
    return np.bincount(index, weights=values, minlength=n)


NUMPY = SimpleNamespace(
    name="numpy",
    ic0=_ic0_numpy,
    forward=_forward_numpy,
    backward=_backward_numpy,
    scatter_add=_scatter_add_numpy,
)

if numba is not None:
    _ic0_jit = numba.njit(cache=True)(_ic0_rows)

    def _ic0_numba(indptr, indices, data, pivot_tol=1e-12):
        out = np.zeros_like(data)
        fail = _ic0_jit(len(indptr) - 1, indptr, indices, data, out, pivot_tol)
        return out, int(fail)

    NUMBA = SimpleNamespace(
        name="numba",
        ic0=_ic0_numba,
        forward=numba.njit(cache=True)(_forward_rows),
        backward=numba.njit(cache=True)(_backward_rows),
        scatter_add=numba.njit(cache=True)(_scatter_add_loop),
    )
else:  # pragma: no cover
    NUMBA = None

ACTIVE = NUMBA if USE_NUMBA else NUMPY


def backend() -> SimpleNamespace:
    """The kernel set selected at import time."""
    return ACTIVE
