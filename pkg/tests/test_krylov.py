"""Conjugate gradient behavior on systems with known solutions."""

import numpy as np
import pytest

from fempack.assembly import AssemblyContext, KernelKind
from fempack.elements import ElementType
from fempack.errors import SolverBreakdownError
from fempack.krylov import pcg_solve
from fempack.mesh import generate_box_mesh
from fempack.sparse import apply_dirichlet, spmv

from test_sparse import csr_from_dense


def test_identity_converges_in_one_iteration():
    A = csr_from_dense(np.eye(6))
    b = np.arange(1.0, 7.0)
    x, stats = pcg_solve(A, b, tol=1e-12)
    np.testing.assert_allclose(x, b, atol=1e-15)
    assert stats.iterations == 1 and stats.converged
    assert len(stats.residual_history) == 2
    assert stats.residual_history[0] == 1.0


def test_diagonal_system_one_preconditioned_iteration():
    A = csr_from_dense(np.diag([1.0, 2.0, 3.0]))
    b = np.array([3.0, -4.0, 9.0])
    x, stats = pcg_solve(A, b, tol=1e-12)
    np.testing.assert_allclose(x, b / np.array([1.0, 2.0, 3.0]), atol=1e-15)
    assert stats.iterations == 1


def test_two_by_two_exact_solution():
    A = csr_from_dense(np.array([[4.0, 1.0], [1.0, 3.0]]))
    b = np.array([1.0, 2.0])
    x, stats = pcg_solve(A, b, tol=1e-14)
    np.testing.assert_allclose(x, [1.0 / 11.0, 7.0 / 11.0], atol=1e-13)
    assert stats.iterations <= 2 and stats.converged


def test_spd_system_converges_within_n_plus_5():
    rng = np.random.default_rng(21)
    B = rng.standard_normal((50, 50))
    A = csr_from_dense(B @ B.T + 50.0 * np.eye(50))
    b = rng.standard_normal(50)
    x, stats = pcg_solve(A, b, tol=1e-10)
    assert stats.converged and stats.iterations <= 55
    assert stats.true_residual <= 2e-10
    assert len(stats.residual_history) == stats.iterations + 1


def test_scale_equivariance_power_of_two():
    rng = np.random.default_rng(22)
    B = rng.standard_normal((20, 20))
    D = B @ B.T + 20.0 * np.eye(20)
    b = rng.standard_normal(20)
    x1, s1 = pcg_solve(csr_from_dense(D), b, tol=1e-10)
    # scaling by a power of two rescales every float exactly
    c = 1024.0
    x2, s2 = pcg_solve(csr_from_dense(c * D), c * b, tol=1e-10)
    assert s1.iterations == s2.iterations
    np.testing.assert_array_equal(x1, x2)


def test_scale_equivariance_generic_factor():
    rng = np.random.default_rng(23)
    B = rng.standard_normal((20, 20))
    D = B @ B.T + 20.0 * np.eye(20)
    b = rng.standard_normal(20)
    x1, s1 = pcg_solve(csr_from_dense(D), b, tol=1e-10)
    x2, s2 = pcg_solve(csr_from_dense(1e3 * D), 1e3 * b, tol=1e-10)
    np.testing.assert_allclose(x1, x2, rtol=1e-9)
    assert abs(s1.iterations - s2.iterations) <= 1


def test_indefinite_matrix_breaks_down():
    A = csr_from_dense(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(SolverBreakdownError, match="curvature"):
        pcg_solve(A, np.array([1.0, -1.0]), tol=1e-12)


def test_non_positive_diagonal_rejected():
    A = csr_from_dense(np.array([[1.0, 0.5], [0.5, -2.0]]))
    with pytest.raises(SolverBreakdownError, match="diagonal"):
        pcg_solve(A, np.ones(2))


def test_zero_rhs_returns_zero():
    A = csr_from_dense(np.eye(4) * 3.0)
    x, stats = pcg_solve(A, np.zeros(4))
    assert not x.any()
    assert stats.converged and stats.iterations == 0
    assert stats.residual_history == [0.0]


def test_exact_initial_guess_converges_immediately():
    A = csr_from_dense(np.diag([2.0, 4.0]))
    b = np.array([2.0, 8.0])
    x, stats = pcg_solve(A, b, x0=np.array([1.0, 2.0]), tol=1e-12)
    assert stats.iterations == 0 and stats.converged


def test_iteration_cap_reported_honestly():
    rng = np.random.default_rng(24)
    B = rng.standard_normal((30, 30))
    A = csr_from_dense(B @ B.T + 1e-2 * np.eye(30))
    b = rng.standard_normal(30)
    x, stats = pcg_solve(A, b, tol=1e-14, max_iter=3)
    assert not stats.converged and stats.iterations == 3
    assert len(stats.residual_history) == 4


def test_poisson_on_quad_mesh_matches_dense_solve():
    mesh = generate_box_mesh(ElementType.QUAD04, 4, 4)
    ctx = AssemblyContext.build(mesh, vector_size=4)
    K = ctx.assemble_matrix(KernelKind.LAPLACIAN, "packed")
    M = ctx.assemble_matrix(KernelKind.MASS, "packed")
    f = np.sin(np.pi * mesh.coords[:, 0]) * np.sin(np.pi * mesh.coords[:, 1])
    b = spmv(M, f)
    fixed = mesh.boundary_nodes()
    Kd, bd = apply_dirichlet(K, fixed, np.zeros(fixed.size), b)
    x, stats = pcg_solve(Kd, bd, tol=1e-12)
    assert stats.converged
    ref = np.linalg.solve(Kd.to_dense(), bd)
    np.testing.assert_allclose(x, ref, atol=1e-10)
