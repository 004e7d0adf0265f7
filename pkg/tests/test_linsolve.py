import numpy as np
import pytest
import scipy.sparse as sp

from aceflow import fem, linsolve
from aceflow.linsolve import (
    ILU0Preconditioner,
    JacobiPreconditioner,
    LUPreconditioner,
    NotSPDError,
    PreconditionerCache,
    SolverError,
    cg_solve,
    gmres_solve,
    multi_rhs_solve,
    solve_shared,
)
from aceflow.mesh import build_structured_mesh

A2 = sp.csr_matrix(np.array([[4.0, 1.0], [1.0, 3.0]]))


def diag_dominant(n, seed):
    rng = np.random.default_rng(seed)
    A = sp.random(n, n, density=0.2, random_state=rng, format="csr")
    A = A + sp.diags(np.abs(A).sum(axis=1).A1 + 1.0)
    return A.tocsr(), rng.standard_normal(n)


def test_gmres_identity():
    b = np.random.default_rng(0).standard_normal(7)
    x, rep = gmres_solve(sp.identity(7, format="csr"), b)
    assert rep.converged and rep.iterations <= 1
    assert np.allclose(x, b, atol=1e-14)


def test_gmres_two_by_two():
    x, rep = gmres_solve(A2, np.array([1.0, 2.0]))
    assert rep.converged
    assert np.allclose(x, [1 / 11, 7 / 11], atol=1e-12)


@pytest.mark.parametrize("precond", [None, "ilu0", "jacobi", "lu"])
def test_gmres_random_against_dense(precond):
    A, b = diag_dominant(50, 1)
    M = linsolve.make_preconditioner(A, precond) if precond else None
    x, rep = gmres_solve(A, b, precond=M, restart=10)
    assert rep.converged and rep.residual <= 1e-10
    assert np.allclose(x, np.linalg.solve(A.toarray(), b), atol=1e-8)


def test_gmres_residual_history_monotone():
    A, b = diag_dominant(80, 2)
    _, rep = gmres_solve(A, b, restart=3)
    h = np.array(rep.history)
    assert rep.converged and len(h) > 3
    assert np.all(np.diff(h) <= 1e-15)


def test_gmres_deterministic():
    A, b = diag_dominant(60, 3)
    x1, _ = gmres_solve(A, b, restart=5)
    x2, _ = gmres_solve(A, b, restart=5)
    assert np.array_equal(x1, x2)


def test_gmres_nonconvergence_reported():
    A, b = diag_dominant(60, 4)
    _, rep = gmres_solve(A, b, max_iter=2, restart=2)
    assert not rep.converged and rep.residual > 1e-10


def test_gmres_input_errors():
    with pytest.raises(ValueError):
        gmres_solve(sp.csr_matrix(np.ones((2, 3))), np.ones(2))
    with pytest.raises(ValueError):
        gmres_solve(A2, np.ones(3))
    with pytest.raises(ValueError):
        gmres_solve(A2, np.ones(2), tol=0.0)


def test_singular_preconditioners_rejected():
    S = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(SolverError):
        ILU0Preconditioner(S)
    with pytest.raises(SolverError):
        JacobiPreconditioner(S)
    with pytest.raises(SolverError):
        LUPreconditioner(sp.csr_matrix((2, 2)))


def test_ilu0_triangular_exact():
    rng = np.random.default_rng(5)
    L = sp.tril(sp.random(40, 40, density=0.2, random_state=rng)) + sp.identity(40)
    b = rng.standard_normal(40)
    x, rep = gmres_solve(L.tocsr(), b, precond=ILU0Preconditioner(L))
    assert rep.iterations == 1
    assert np.allclose(L @ x, b, atol=1e-12)


def test_lu_ordering_choice():
    assert LUPreconditioner(A2).ordering == "MMD_AT_PLUS_A"
    saddle = sp.csr_matrix(np.array([[2.0, 0.0, 1.0], [0.0, 2.0, 1.0], [1.0, 1.0, 0.0]]))
    assert LUPreconditioner(saddle).ordering == "COLAMD"


def test_cg_examples():
    x, rep = cg_solve(2.0 * sp.identity(5, format="csr"), np.ones(5))
    assert np.allclose(x, 0.5)
    x, rep = cg_solve(A2, np.zeros(2))
    assert rep.iterations == 0 and np.all(x == 0)
    fe = fem.build_fe_system(build_structured_mesh(2), "cavity")
    M = fem.assemble_static_operators(fe).M_p
    b = np.arange(M.shape[0], dtype=float)
    x, rep = cg_solve(M, b)
    assert rep.converged
    assert np.allclose(x, np.linalg.solve(M.toarray(), b), rtol=0, atol=1e-10 * np.abs(x).max())


def test_cg_detects_indefinite():
    with pytest.raises(NotSPDError):
        cg_solve(sp.diags([1.0, -1.0]).tocsr(), np.ones(2), precond=linsolve.IdentityPreconditioner())


def test_multi_rhs_examples():
    b = np.array([1.0, 2.0])
    xs, reps = multi_rhs_solve(A2, [b, b, b])
    assert all(np.array_equal(xs[0], x) for x in xs)
    xs, _ = multi_rhs_solve(A2, [b, 2 * b])
    assert np.allclose(xs[1], 2 * xs[0], atol=1e-14)
    with pytest.raises(ValueError):
        multi_rhs_solve(A2, [np.ones(3)])


def test_multi_rhs_shared_setup_cheaper():
    A, _ = diag_dominant(400, 6)
    rng = np.random.default_rng(7)
    rhs = [rng.standard_normal(400) for _ in range(4)]
    shared = ILU0Preconditioner(A)
    xs, reps = multi_rhs_solve(A, rhs, shared)
    fresh = [ILU0Preconditioner(A) for _ in rhs]
    for b, x, M in zip(rhs, xs, fresh):
        y, _ = gmres_solve(A, b, precond=M)
        assert np.allclose(x, y, atol=1e-8)
    assert all(r.converged for r in reps)
    assert shared.setup_time < sum(M.setup_time for M in fresh)


def test_multi_rhs_jobs_independent():
    A, _ = diag_dominant(100, 8)
    rng = np.random.default_rng(9)
    rhs = [rng.standard_normal(100) for _ in range(4)]
    M = ILU0Preconditioner(A)
    a, _ = multi_rhs_solve(A, rhs, M, jobs=1)
    b, _ = multi_rhs_solve(A, rhs, M, jobs=3)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_preconditioner_cache_reuse():
    A, b = diag_dominant(50, 10)
    cache = PreconditionerCache("lu", reuse_iterations=3)
    solve_shared(A, [b], cache, "u", key=0.1)
    solve_shared(A, [b], cache, "u", key=0.1)
    assert cache.builds == 1
    solve_shared(A, [b], cache, "u", key=0.05)  # key change rebuilds
    assert cache.builds == 2
    nearby = A + sp.diags(np.full(50, 5.0))
    xs, reps = solve_shared(nearby, [b], cache, "u", key=0.05)
    assert reps[0].converged and cache.builds == 2
    with pytest.raises(ValueError):
        PreconditionerCache("bogus")
