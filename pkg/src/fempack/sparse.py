"""CSR matrices and the vector kernels acting on them.

Everything here is written in-repo on purpose: the benchmark times these
loops, so no vendor sparse backend is involved.  The scalar kernels run
in a fixed sequential order, which makes repeated applications bitwise
reproducible; optional parallel variants exist for spmv only and are
allowed to differ by rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .mesh import Mesh


@dataclass
class CsrMatrix:
    n: int
    rowptr: np.ndarray
    colind: np.ndarray
    vals: np.ndarray

    @property
    def nnz(self) -> int:
        return int(self.rowptr[-1])

    def copy(self) -> "CsrMatrix":
        return CsrMatrix(self.n, self.rowptr, self.colind, self.vals.copy())

    def with_vals(self, vals: np.ndarray) -> "CsrMatrix":
        return CsrMatrix(self.n, self.rowptr, self.colind, vals)

    def row_indices(self) -> np.ndarray:
        """Row index of every stored entry."""
        return np.repeat(
            np.arange(self.n, dtype=np.int64), np.diff(self.rowptr)
        )

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        out[self.row_indices(), self.colind] = self.vals
        return out

    def diagonal(self) -> np.ndarray:
        """Values of the stored diagonal entries."""
        out = np.zeros(self.n)
        for i in range(self.n):
            lo, hi = self.rowptr[i], self.rowptr[i + 1]
            k = lo + np.searchsorted(self.colind[lo:hi], i)
            if k < hi and self.colind[k] == i:
                out[i] = self.vals[k]
        return out


def build_node_pattern(mesh: Mesh) -> CsrMatrix:
    """CSR sparsity of the node-adjacency graph, zero-valued.

    Two nodes are adjacent when they share an element; the diagonal is
    always present.  Column indices are ascending within each row.
    """
    n = mesh.nnode
    keys = [np.arange(n, dtype=np.int64) * (n + 1)]
    for g in mesh.groups:
        c = g.conn
        keys.append((c[:, :, None] * n + c[:, None, :]).ravel())
    uniq = np.unique(np.concatenate(keys))
    rows = uniq // n
    cols = uniq % n
    rowptr = np.zeros(n + 1, dtype=np.int64)
    rowptr[1:] = np.cumsum(np.bincount(rows, minlength=n))
    return CsrMatrix(n, rowptr, cols.astype(np.int64), np.zeros(uniq.size))


@njit(cache=True)
def _spmv(rowptr, colind, vals, x, y):
    for i in range(rowptr.size - 1):
        acc = 0.0
        for k in range(rowptr[i], rowptr[i + 1]):
            acc += vals[k] * x[colind[k]]
        y[i] = acc


@njit(cache=True, parallel=True)
def _spmv_parallel(rowptr, colind, vals, x, y):
    for i in prange(rowptr.size - 1):
        acc = 0.0
        for k in range(rowptr[i], rowptr[i + 1]):
            acc += vals[k] * x[colind[k]]
        y[i] = acc


@njit(cache=True)
def _axpy(alpha, x, y, out):
    for i in range(x.size):
        out[i] = alpha * x[i] + y[i]


@njit(cache=True)
def _dot(x, y):
    acc = 0.0
    for i in range(x.size):
        acc += x[i] * y[i]
    return acc


def spmv(A: CsrMatrix, x: np.ndarray, parallel: bool = False) -> np.ndarray:
    y = np.empty(A.n)
    if parallel:
        _spmv_parallel(A.rowptr, A.colind, A.vals, x, y)
    else:
        _spmv(A.rowptr, A.colind, A.vals, x, y)
    return y


def axpy(alpha: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    _axpy(alpha, x, y, out)
    return out


def dot(x: np.ndarray, y: np.ndarray) -> float:
    return _dot(x, y)


def norm2(x: np.ndarray) -> float:
    return np.sqrt(_dot(x, x))


def transpose_csr(A: CsrMatrix) -> CsrMatrix:
    rows = A.row_indices()
    order = np.lexsort((rows, A.colind))
    rowptr = np.zeros(A.n + 1, dtype=np.int64)
    rowptr[1:] = np.cumsum(np.bincount(A.colind, minlength=A.n))
    return CsrMatrix(A.n, rowptr, rows[order], A.vals[order])


@njit(cache=True)
def _spgemm_count(arp, aci, brp, bci, n):
    marker = np.full(n, -1, dtype=np.int64)
    counts = np.zeros(n, dtype=np.int64)
    for i in range(n):
        c = 0
        for ka in range(arp[i], arp[i + 1]):
            j = aci[ka]
            for kb in range(brp[j], brp[j + 1]):
                col = bci[kb]
                if marker[col] != i:
                    marker[col] = i
                    c += 1
        counts[i] = c
    return counts


@njit(cache=True)
def _spgemm_fill(arp, aci, av, brp, bci, bv, rowptr, colind, vals, n):
    marker = np.full(n, -1, dtype=np.int64)
    where = np.zeros(n, dtype=np.int64)
    for i in range(n):
        nxt = rowptr[i]
        for ka in range(arp[i], arp[i + 1]):
            j = aci[ka]
            va = av[ka]
            for kb in range(brp[j], brp[j + 1]):
                col = bci[kb]
                if marker[col] != i:
                    marker[col] = i
                    where[col] = nxt
                    colind[nxt] = col
                    vals[nxt] = va * bv[kb]
                    nxt += 1
                else:
                    vals[where[col]] += va * bv[kb]


def spgemm(A: CsrMatrix, B: CsrMatrix) -> CsrMatrix:
    """Sparse product A @ B with sorted column indices."""
    n = A.n
    counts = _spgemm_count(A.rowptr, A.colind, B.rowptr, B.colind, n)
    rowptr = np.zeros(n + 1, dtype=np.int64)
    rowptr[1:] = np.cumsum(counts)
    colind = np.empty(rowptr[-1], dtype=np.int64)
    vals = np.empty(rowptr[-1])
    _spgemm_fill(
        A.rowptr, A.colind, A.vals, B.rowptr, B.colind, B.vals, rowptr, colind, vals, n
    )
    rows = np.repeat(np.arange(n, dtype=np.int64), counts)
    order = np.lexsort((colind, rows))
    return CsrMatrix(n, rowptr, colind[order], vals[order])


def normal_product(A: CsrMatrix, d: np.ndarray) -> CsrMatrix:
    """A^T diag(d) A, used to compose the pressure operator."""
    scaled = A.with_vals(A.vals * d[A.row_indices()])
    return spgemm(transpose_csr(A), scaled)


def csr_add(A: CsrMatrix, B: CsrMatrix) -> CsrMatrix:
    """Sum of two CSR matrices with (possibly) different patterns."""
    if A.n != B.n:
        raise ValueError("dimension mismatch")
    n = A.n
    keys = np.concatenate(
        [A.row_indices() * n + A.colind, B.row_indices() * n + B.colind]
    )
    vals = np.concatenate([A.vals, B.vals])
    uniq, inverse = np.unique(keys, return_inverse=True)
    out_vals = np.zeros(uniq.size)
    np.add.at(out_vals, inverse, vals)
    rows = uniq // n
    rowptr = np.zeros(n + 1, dtype=np.int64)
    rowptr[1:] = np.cumsum(np.bincount(rows, minlength=n))
    return CsrMatrix(n, rowptr, (uniq % n).astype(np.int64), out_vals)


def apply_dirichlet(
    A: CsrMatrix,
    nodes: np.ndarray,
    values: np.ndarray | None = None,
    b: np.ndarray | None = None,
) -> tuple[CsrMatrix, np.ndarray | None]:
    """Eliminate Dirichlet nodes symmetrically.

    Rows and columns of the given nodes are zeroed and their diagonal set
    to one.  When b and values are supplied, the right-hand side first
    absorbs the column contributions (b -= A[:, nodes] @ values) and then
    fixes b[nodes] = values, so the solution matches the constrained
    problem exactly.  Returns the modified copy and the modified b.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    flag = np.zeros(A.n, dtype=bool)
    flag[nodes] = True
    rows = A.row_indices()
    col_hit = flag[A.colind]
    row_hit = flag[rows]
    out = A.copy()
    if b is not None:
        b = b.copy()
        if values is None:
            values = np.zeros(nodes.size)
        lift = np.zeros(A.n)
        lift[nodes] = values
        sel = col_hit & ~row_hit
        np.subtract.at(b, rows[sel], A.vals[sel] * lift[A.colind[sel]])
        b[nodes] = values
    out.vals[row_hit | col_hit] = 0.0
    for i in nodes:
        lo, hi = out.rowptr[i], out.rowptr[i + 1]
        k = lo + np.searchsorted(out.colind[lo:hi], i)
        out.vals[k] = 1.0
    return out, b


def format_coo(A: CsrMatrix) -> str:
    """Triplet text dump (row col value per line) for diffing."""
    rows = A.row_indices()
    lines = [
        f"{i} {j} {v:.17g}" for i, j, v in zip(rows, A.colind, A.vals)
    ]
    return "\n".join(lines) + "\n"
