"""Krylov solvers on scipy CSR matrices with ILU(0) and Jacobi preconditioners.

The default tolerances (relative residual 1e-10, restart 50, 2000 iterations)
sit well below the discretization error of every experiment in this package.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import kernels

DEFAULT_TOL = 1e-10
DEFAULT_RESTART = 50
DEFAULT_MAX_ITER = 2000


class SolverError(RuntimeError):
    """Raised when a solve cannot produce a usable answer."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NotSPDError(SolverError):
    pass


@dataclass
class SolverReport:
    iterations: int = 0
    residual: float = 0.0
    converged: bool = False
    wall_time: float = 0.0
    history: list = field(default_factory=list, repr=False)
    message: str = ""


def as_csr(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A) if not sp.isspmatrix_csr(A) else A
    if not A.has_sorted_indices:
        A = A.sorted_indices()
    return A


class IdentityPreconditioner:
    setup_time = 0.0

    def solve(self, b):
        return np.array(b, dtype=float)


class JacobiPreconditioner:
    def __init__(self, A):
        t0 = time.perf_counter()
        d = as_csr(A).diagonal()
        if np.any(d == 0.0):
            raise SolverError("Jacobi preconditioner has a zero diagonal entry")
        self.inv_diag = 1.0 / d
        self.setup_time = time.perf_counter() - t0

    def solve(self, b):
        return self.inv_diag * b


class ILU0Preconditioner:
    """Incomplete LU with zero fill-in on the sparsity pattern of ``A``.

    Explicitly stored zeros count as part of the pattern.
    """

    def __init__(self, A, backend: str | None = None):
        t0 = time.perf_counter()
        A = as_csr(A)
        self.shape = A.shape
        self.indptr = np.ascontiguousarray(A.indptr, dtype=np.int32)
        self.indices = np.ascontiguousarray(A.indices, dtype=np.int32)
        kset = kernels.backend(backend)
        try:
            self.lu, self.diag = kset.ilu0_factor(self.indptr, self.indices, np.ascontiguousarray(A.data, dtype=float))
        except ZeroDivisionError as exc:
            raise SolverError(f"singular ILU(0) preconditioner: {exc}") from exc
        self._solve = kset.make_ilu0_solver(self.indptr, self.indices, self.lu, self.diag)
        self.setup_time = time.perf_counter() - t0

    def solve(self, b):
        return self._solve(np.ascontiguousarray(b, dtype=float))


class LUPreconditioner:
    """Sparse LU (SuperLU) of a matrix, used as a GMRES preconditioner.

    Applied to the matrix it was built from, GMRES converges in one
    iteration; applied to a nearby matrix from a later timestep it still
    needs only a handful.

    ``ordering="auto"`` uses minimum degree on A + A^T when the diagonal is
    zero-free (far less fill for the velocity and temperature matrices) and
    COLAMD otherwise (saddle-point matrices, where minimum degree on the
    symmetrized pattern fights the pivoting).
    """

    def __init__(self, A, ordering: str = "auto"):
        t0 = time.perf_counter()
        A = as_csr(A)
        if ordering == "auto":
            ordering = "MMD_AT_PLUS_A" if np.all(A.diagonal() != 0.0) else "COLAMD"
        self.ordering = ordering
        try:
            self._lu = splu(A.tocsc(), permc_spec=ordering)
        except RuntimeError as exc:
            raise SolverError(f"singular LU preconditioner: {exc}") from exc
        self.setup_time = time.perf_counter() - t0

    def solve(self, b):
        return self._lu.solve(np.asarray(b, dtype=float))


PRECONDITIONERS = ("ilu0", "lu", "jacobi", "none")


def make_preconditioner(A, kind: str = "ilu0"):
    if kind == "ilu0":
        return ILU0Preconditioner(A)
    if kind == "lu":
        return LUPreconditioner(A)
    if kind == "jacobi":
        return JacobiPreconditioner(A)
    if kind in ("none", None):
        return IdentityPreconditioner()
    raise ValueError(f"unknown preconditioner {kind!r}")


class PreconditionerCache:
    """Keeps one preconditioner per named system across timesteps.

    A cached preconditioner is reused while the previous solve with it took at
    most ``reuse_iterations`` iterations and the key (for instance the
    timestep) is unchanged; otherwise it is rebuilt from the current matrix.
    ``reuse_iterations = 0`` rebuilds every time.
    """

    def __init__(self, kind: str = "ilu0", reuse_iterations: int = 0):
        if kind not in PRECONDITIONERS:
            raise ValueError(f"unknown preconditioner {kind!r}")
        self.kind = kind
        self.reuse_iterations = reuse_iterations
        self._entries: dict = {}
        self.builds = 0

    def get(self, name: str, A, key=None):
        entry = self._entries.get(name)
        if entry is not None and entry["key"] == key and entry["fresh"]:
            return entry["precond"], False
        M = make_preconditioner(A, self.kind)
        self.builds += 1
        self._entries[name] = {"precond": M, "key": key, "fresh": True}
        return M, True

    def report(self, name: str, iterations: int) -> None:
        entry = self._entries.get(name)
        if entry is not None and iterations > self.reuse_iterations:
            entry["fresh"] = False

    def invalidate(self, name: str | None = None) -> None:
        if name is None:
            self._entries.clear()
        else:
            self._entries.pop(name, None)


def solve_shared(A, rhs, cache: PreconditionerCache, name: str, key=None, **kw):
    """multi_rhs_solve with a cached preconditioner; rebuilds and retries once
    if a reused preconditioner fails to converge."""
    M, built = cache.get(name, A, key)
    xs, reports = multi_rhs_solve(A, rhs, M, **kw)
    if not built and not all(r.converged for r in reports):
        cache.invalidate(name)
        M, _ = cache.get(name, A, key)
        xs, reports = multi_rhs_solve(A, rhs, M, **kw)
    cache.report(name, max((r.iterations for r in reports), default=0))
    return xs, reports


def gmres_solve(
    A,
    b,
    x0=None,
    tol: float = DEFAULT_TOL,
    restart: int = DEFAULT_RESTART,
    max_iter: int = DEFAULT_MAX_ITER,
    precond=None,
):
    """Right-preconditioned restarted GMRES with modified Gram-Schmidt.

    Convergence is judged on the true relative residual ||b - Ax|| / ||b||,
    which right preconditioning leaves visible to the Arnoldi least-squares
    problem.

    Returns
    -------
    x : ndarray
    report : SolverReport
    """
    t0 = time.perf_counter()
    A = as_csr(A)
    n = A.shape[0]
    if A.shape[0] != A.shape[1]:
        raise ValueError("GMRES needs a square matrix")
    b = np.asarray(b, dtype=float)
    if b.shape != (n,):
        raise ValueError(f"rhs has shape {b.shape}, expected {(n,)}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    M = precond or IdentityPreconditioner()
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    report = SolverReport()

    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        report.converged = True
        report.wall_time = time.perf_counter() - t0
        return np.zeros(n), report

    r = b - A @ x
    beta = np.linalg.norm(r)
    report.history.append(beta / bnorm)
    total = 0
    while True:
        if beta / bnorm <= tol:
            report.converged = True
            break
        if total >= max_iter:
            report.message = "maximum iterations reached"
            break
        m = min(restart, max_iter - total)
        V = np.zeros((m + 1, n))
        Z = np.zeros((m, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        k_used = 0
        breakdown = False
        for k in range(m):
            Z[k] = M.solve(V[k])
            w = A @ Z[k]
            for i in range(k + 1):
                H[i, k] = w @ V[i]
                w -= H[i, k] * V[i]
            H[k + 1, k] = np.linalg.norm(w)
            for i in range(k):
                tmp = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
                H[i + 1, k] = -sn[i] * H[i, k] + cs[i] * H[i + 1, k]
                H[i, k] = tmp
            hkk, hk1 = H[k, k], H[k + 1, k]
            denom = np.hypot(hkk, hk1)
            if denom == 0.0:
                breakdown = True
                break
            cs[k], sn[k] = hkk / denom, hk1 / denom
            H[k, k] = denom
            H[k + 1, k] = 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k] * g[k]
            k_used = k + 1
            total += 1
            if abs(g[k + 1]) / bnorm <= tol or hk1 == 0.0:
                if hk1 == 0.0:
                    breakdown = True
                break
            V[k + 1] = w / hk1
        if k_used:
            y = np.linalg.solve(np.triu(H[:k_used, :k_used]), g[:k_used])
            x = x + y @ Z[:k_used]
        r = b - A @ x
        beta = np.linalg.norm(r)
        report.history.append(beta / bnorm)
        if breakdown and beta / bnorm > tol:
            report.message = "Arnoldi breakdown"
            break
    report.iterations = total
    report.residual = beta / bnorm
    report.wall_time = time.perf_counter() - t0
    return x, report


def cg_solve(A, b, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER, precond=None, x0=None):
    """Preconditioned conjugate gradients for SPD systems.

    Raises NotSPDError on non-positive curvature.
    """
    t0 = time.perf_counter()
    A = as_csr(A)
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    report = SolverReport()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        report.converged = True
        return np.zeros(n), report
    M = precond or JacobiPreconditioner(A)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    z = M.solve(r)
    p = z.copy()
    rz = r @ z
    k = 0
    res = np.linalg.norm(r) / bnorm
    while res > tol and k < max_iter:
        Ap = A @ p
        curv = p @ Ap
        if curv <= 0.0:
            report.iterations, report.residual = k, res
            raise NotSPDError("non-positive curvature: matrix is not SPD", report)
        alpha = rz / curv
        x += alpha * p
        r -= alpha * Ap
        k += 1
        res = np.linalg.norm(r) / bnorm
        z = M.solve(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    report.iterations = k
    report.residual = res
    report.converged = res <= tol
    report.wall_time = time.perf_counter() - t0
    if not report.converged:
        report.message = "maximum iterations reached"
    return x, report


def multi_rhs_solve(
    A,
    rhs,
    shared_precond=None,
    tol: float = DEFAULT_TOL,
    x0=None,
    restart: int = DEFAULT_RESTART,
    max_iter: int = DEFAULT_MAX_ITER,
    jobs: int = 1,
):
    """Solve A x_j = b_j for every right-hand side with one preconditioner.

    The preconditioner is built once (ILU(0) unless ``shared_precond`` is
    given) and reused for all members. With ``jobs > 1`` the independent
    Krylov solves run on a thread pool; results do not depend on ``jobs``.

    Returns
    -------
    xs : list of ndarray
    reports : list of SolverReport
    """
    A = as_csr(A)
    rhs = [np.asarray(b, dtype=float) for b in rhs]
    for b in rhs:
        if b.shape != (A.shape[0],):
            raise ValueError("right-hand side dimension does not match the matrix")
    M = shared_precond if shared_precond is not None else ILU0Preconditioner(A)
    guesses = list(x0) if x0 is not None else [None] * len(rhs)

    def one(j):
        return gmres_solve(A, rhs[j], x0=guesses[j], tol=tol, restart=restart, max_iter=max_iter, precond=M)

    if jobs > 1 and len(rhs) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, range(len(rhs))))
    else:
        results = [one(j) for j in range(len(rhs))]
    return [r[0] for r in results], [r[1] for r in results]
