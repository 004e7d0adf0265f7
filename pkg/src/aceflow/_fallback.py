"""Pure numpy/scipy versions of the compiled kernels in ``_kernels.pyx``.

Same signatures and results; used when the extension is not built or when
``ACEFLOW_PURE_PYTHON`` is set.
"""

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve_triangular


def ilu0_factor(indptr, indices, data):
    indptr = np.asarray(indptr)
    indices = np.asarray(indices)
    n = len(indptr) - 1
    lu = np.array(data, dtype=np.float64)
    diag = np.full(n, -1, dtype=np.int32)
    for i in range(n):
        row = indices[indptr[i] : indptr[i + 1]]
        hit = np.flatnonzero(row == i)
        if hit.size == 0:
            raise ZeroDivisionError(f"row {i} has no diagonal entry")
        diag[i] = indptr[i] + hit[0]

    marker = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        start, stop = indptr[i], indptr[i + 1]
        marker[indices[start:stop]] = np.arange(start, stop)
        for kk in range(start, diag[i]):
            k = indices[kk]
            piv = lu[diag[k]]
            if piv == 0.0:
                raise ZeroDivisionError(f"zero pivot in row {k}")
            mult = lu[kk] / piv
            lu[kk] = mult
            upper = slice(diag[k] + 1, indptr[k + 1])
            pos = marker[indices[upper]]
            keep = pos >= 0
            # each target position appears at most once, so fancy-index update is safe
            lu[pos[keep]] -= mult * lu[upper][keep]
        marker[indices[start:stop]] = -1
        if lu[diag[i]] == 0.0:
            raise ZeroDivisionError(f"zero pivot in row {i}")
    return lu, diag


def make_ilu0_solver(indptr, indices, lu, diag):
    """Return ``solve(b)`` for the packed factor using scipy triangular solves."""
    n = len(indptr) - 1
    indptr = np.asarray(indptr)
    indices = np.asarray(indices)
    rows = np.repeat(np.arange(n), np.diff(indptr))
    lower = indices < rows
    L = sp.csr_matrix((lu[lower], (rows[lower], indices[lower])), shape=(n, n)) + sp.eye(n, format="csr")
    U = sp.csr_matrix((lu[~lower], (rows[~lower], indices[~lower])), shape=(n, n))
    L, U = L.tocsr(), U.tocsr()

    def solve(b):
        y = spsolve_triangular(L, np.asarray(b, dtype=float), lower=True, unit_diagonal=True)
        return spsolve_triangular(U, y, lower=False)

    return solve


def skew_convection(cells, scatter, wx, wy, phi, grad, wdet, nnz):
    wq = np.stack([np.einsum("qa,ta->tq", phi, wx[cells]), np.einsum("qa,ta->tq", phi, wy[cells])], axis=-1)
    adv = np.einsum("tqd,tqbd->tqb", wq, grad)
    C = np.einsum("tq,qa,tqb->tab", wdet, phi, adv)
    local = 0.5 * (C - C.transpose(0, 2, 1))
    return np.bincount(scatter, weights=local.ravel(), minlength=nnz)
