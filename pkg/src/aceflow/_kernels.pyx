# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled ILU(0) factorization and triangular solves on CSR arrays."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def ilu0_factor(const int[::1] indptr, const int[::1] indices, const double[::1] data):
    """In-pattern incomplete LU. Returns (lu, diag) where ``lu`` holds the unit
    lower factor below the diagonal and U on and above it, and ``diag[i]`` is
    the position of entry (i, i). Column indices must be sorted per row."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef cnp.ndarray[cnp.float64_t, ndim=1] lu_arr = np.array(data, dtype=np.float64)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] diag_arr = np.full(n, -1, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] marker_arr = np.full(n, -1, dtype=np.int32)
    cdef double[::1] lu = lu_arr
    cdef int[::1] diag = diag_arr
    cdef int[::1] marker = marker_arr
    cdef Py_ssize_t i, kk, jj, k, p
    cdef double mult
    cdef int bad = -1

    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            if indices[p] == i:
                diag[i] = <int>p
        if diag[i] < 0:
            raise ZeroDivisionError(f"row {i} has no diagonal entry")

    with nogil:
        for i in range(n):
            for p in range(indptr[i], indptr[i + 1]):
                marker[indices[p]] = <int>p
            for kk in range(indptr[i], indptr[i + 1]):
                k = indices[kk]
                if k >= i:
                    break
                if lu[diag[k]] == 0.0:
                    bad = <int>k
                    break
                mult = lu[kk] / lu[diag[k]]
                lu[kk] = mult
                for jj in range(diag[k] + 1, indptr[k + 1]):
                    p = marker[indices[jj]]
                    if p >= 0:
                        lu[p] -= mult * lu[jj]
            for p in range(indptr[i], indptr[i + 1]):
                marker[indices[p]] = -1
            if bad >= 0:
                break
            if lu[diag[i]] == 0.0:
                bad = <int>i
                break
    if bad >= 0:
        raise ZeroDivisionError(f"zero pivot in row {bad}")
    return lu_arr, diag_arr


def ilu0_solve(const int[::1] indptr, const int[::1] indices, const double[::1] lu,
               const int[::1] diag, const double[::1] b):
    """Solve (L U) x = b for the factor produced by ``ilu0_factor``."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef cnp.ndarray[cnp.float64_t, ndim=1] x_arr = np.array(b, dtype=np.float64)
    cdef double[::1] x = x_arr
    cdef Py_ssize_t i, p
    cdef double s
    with nogil:
        for i in range(n):
            s = x[i]
            for p in range(indptr[i], diag[i]):
                s -= lu[p] * x[indices[p]]
            x[i] = s
        for i in range(n - 1, -1, -1):
            s = x[i]
            for p in range(diag[i] + 1, indptr[i + 1]):
                s -= lu[p] * x[indices[p]]
            x[i] = s / lu[diag[i]]
    return x_arr


def skew_convection(const long[:, ::1] cells, const long[::1] scatter, const double[::1] wx,
                    const double[::1] wy, const double[:, ::1] phi, const double[:, :, :, ::1] grad,
                    const double[:, ::1] wdet, Py_ssize_t nnz):
    """Assemble 1/2 (w.grad phi_j, phi_i) - 1/2 (w.grad phi_i, phi_j) into the
    CSR data array addressed by ``scatter`` (element-major, 6x6 per element)."""
    cdef Py_ssize_t nt = cells.shape[0], nq = phi.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out_arr = np.zeros(nnz, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double C[6][6]
    cdef double adv[6]
    cdef double wxq, wyq, s
    cdef Py_ssize_t t, q, a, b, base
    with nogil:
        for t in range(nt):
            for a in range(6):
                for b in range(6):
                    C[a][b] = 0.0
            for q in range(nq):
                wxq = 0.0
                wyq = 0.0
                for a in range(6):
                    wxq = wxq + phi[q, a] * wx[cells[t, a]]
                    wyq = wyq + phi[q, a] * wy[cells[t, a]]
                for b in range(6):
                    adv[b] = wxq * grad[t, q, b, 0] + wyq * grad[t, q, b, 1]
                for a in range(6):
                    s = wdet[t, q] * phi[q, a]
                    for b in range(6):
                        C[a][b] = C[a][b] + s * adv[b]
            base = 36 * t
            for a in range(6):
                for b in range(6):
                    out[scatter[base + 6 * a + b]] += 0.5 * (C[a][b] - C[b][a])
    return out_arr
