"""Jacobi-preconditioned conjugate gradient on in-repo CSR kernels.

The iteration tracks the recurrence residual and re-evaluates the true
residual once at exit; the history stores relative residuals (initial
entry included, so its length is iterations + 1).  All reductions run
sequentially, making solves bitwise reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SolverBreakdownError
from .sparse import CsrMatrix, axpy, dot, norm2, spmv


@dataclass
class SolverStats:
    iterations: int
    converged: bool
    residual_history: list[float] = field(default_factory=list)
    true_residual: float = 0.0


def pcg_solve(
    A: CsrMatrix,
    b: np.ndarray,
    x0: np.ndarray | None = None,
    tol: float = 1e-8,
    max_iter: int | None = None,
    jacobi: bool = True,
) -> tuple[np.ndarray, SolverStats]:
    """Solve A x = b for symmetric positive (semi-)definite A.

    Stops when ||r|| / ||b|| <= tol.  Raises SolverBreakdownError when a
    search direction has non-positive curvature, which signals an
    indefinite or broken operator.
    """
    n = A.n
    if max_iter is None:
        max_iter = 10 * n
    if jacobi:
        d = A.diagonal()
        if (d <= 0.0).any():
            raise SolverBreakdownError(
                "Jacobi preconditioner needs a positive diagonal"
            )
    else:
        d = np.ones(n)
    bnorm = norm2(b)
    if bnorm == 0.0:
        return np.zeros(n), SolverStats(0, True, [0.0], 0.0)
    if x0 is None:
        x = np.zeros(n)
        r = b.copy()
    else:
        x = x0.copy()
        r = axpy(-1.0, spmv(A, x), b)
    relres = norm2(r) / bnorm
    history = [relres]
    if relres <= tol:
        return x, SolverStats(0, True, history, relres)
    z = r / d
    p = z.copy()
    rz = dot(r, z)
    iterations = 0
    converged = False
    for _ in range(max_iter):
        q = spmv(A, p)
        pq = dot(p, q)
        if pq <= 0.0:
            raise SolverBreakdownError(f"non-positive curvature p^T A p = {pq:.6e}")
        alpha = rz / pq
        x = axpy(alpha, p, x)
        r = axpy(-alpha, q, r)
        iterations += 1
        relres = norm2(r) / bnorm
        history.append(relres)
        if relres <= tol:
            converged = True
            break
        z = r / d
        rz_new = dot(r, z)
        p = axpy(rz_new / rz, p, z)
        rz = rz_new
    true_residual = norm2(axpy(-1.0, spmv(A, x), b)) / bnorm
    return x, SolverStats(iterations, converged, history, true_residual)
