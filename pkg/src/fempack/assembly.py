"""Global assembly: element kernels plus scatter into CSR and RHS vectors.

Every volume kernel runs in either of two layouts:

* ``scalar``: one element at a time, the classic reference loop;
* ``packed``: `vector_size` elements per pack with the lane index
  innermost, feeding the compiler unit-stride loops it can vectorize.

Both layouts execute identical arithmetic per element, so global results
agree to rounding; padded lanes carry zero weights and scatter exact
zeros.  An AssemblyContext owns the pattern, the scatter maps and
reusable work buffers so repeated assemblies do not reallocate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import _kernels as K
from .elements import ReferenceElement, compute_geometry, face_rule, reference_element
from .errors import ConfigurationError, InvertedElementError, ScatterPatternError
from .mesh import Mesh
from .packing import PackConfig, PackSet, aligned_zeros, build_packs
from .sparse import CsrMatrix, build_node_pattern

LAYOUTS = ("scalar", "packed")


class KernelKind(Enum):
    MASS = "mass"
    LAPLACIAN = "laplacian"
    CONVECTION = "convection"
    MOMENTUM_RHS = "momentum_rhs"
    SCALAR_RHS = "scalar_rhs"

    @property
    def is_matrix(self) -> bool:
        return self in (KernelKind.MASS, KernelKind.LAPLACIAN, KernelKind.CONVECTION)


def matrix_positions(conn: np.ndarray, pattern: CsrMatrix) -> np.ndarray:
    """Index into pattern.vals for every (i, j) node pair of every element."""
    n = pattern.n
    keys = pattern.row_indices() * n + pattern.colind
    want = conn[..., :, None] * n + conn[..., None, :]
    pos = np.searchsorted(keys, want)
    if pos.max(initial=0) >= keys.size or not np.array_equal(keys[pos], want):
        raise ScatterPatternError("element node pair missing from CSR pattern")
    return pos.astype(np.int64)


@dataclass
class GroupData:
    """Per element-type state: tables, packing, scatter maps, buffers."""

    ref: ReferenceElement
    conn: np.ndarray
    packset: PackSet
    pos_scalar: np.ndarray
    pos_packed: np.ndarray
    detjw: dict = field(default_factory=dict)
    gradn: dict = field(default_factory=dict)
    buffers: dict = field(default_factory=dict)

    @property
    def nelem(self) -> int:
        return self.conn.shape[0]


class AssemblyContext:
    """Mesh-bound assembly state shared by all kernels and both layouts."""

    def __init__(self, mesh: Mesh, pattern: CsrMatrix, groups: list[GroupData], vector_size: int):
        self.mesh = mesh
        self.pattern = pattern
        self.groups = groups
        self.vector_size = vector_size
        self._vals: dict = {}

    @classmethod
    def build(cls, mesh: Mesh, vector_size: int = 8) -> "AssemblyContext":
        packs = build_packs(mesh, PackConfig(vector_size))
        pattern = build_node_pattern(mesh)
        groups = []
        offset = 0
        for g, ps in zip((g for g in mesh.groups if g.nelem), packs):
            pos_s = matrix_positions(g.conn, pattern)
            local = ps.elem_index - offset
            lanes_last = np.moveaxis(pos_s[local], 1, -1)
            pos_p = np.ascontiguousarray(lanes_last, dtype=np.int64)
            groups.append(GroupData(reference_element(g.etype), g.conn, ps, pos_s, pos_p))
            offset += g.nelem
        return cls(mesh, pattern, groups, vector_size)

    # -- geometry ---------------------------------------------------------

    def _geometry_buffers(self, g: GroupData, layout: str, need_grad: bool):
        dim, nn, ng = g.ref.dim, g.ref.nnodes, g.ref.ngauss
        if layout == "scalar":
            if "scalar" not in g.detjw:
                g.detjw["scalar"] = np.empty((g.nelem, ng))
            if need_grad and "scalar" not in g.gradn:
                g.gradn["scalar"] = np.empty((g.nelem, dim, nn, ng))
            grad = g.gradn.get("scalar")
            if grad is None:
                grad = np.empty((1, dim, nn, ng))
            return g.detjw["scalar"], grad
        vs = self.vector_size
        if "packed" not in g.detjw:
            g.detjw["packed"] = aligned_zeros((g.packset.npacks, ng, vs))
        if need_grad and "packed" not in g.gradn:
            g.gradn["packed"] = aligned_zeros((g.packset.npacks, dim, nn, ng, vs))
        grad = g.gradn.get("packed")
        if grad is None:
            grad = np.empty((1, dim, nn, ng, vs))
        return g.detjw["packed"], grad

    def refresh_geometry(self, layout: str, need_grad: bool = True) -> None:
        """Recompute Jacobian factors for all groups in one layout."""
        coords = self.mesh.coords
        for g in self.groups:
            detjw, gradn = self._geometry_buffers(g, layout, need_grad)
            if layout == "scalar":
                bad, ig = K.geometry_scalar(
                    g.conn, coords, g.ref.dN, g.ref.weights, need_grad, detjw, gradn
                )
            else:
                bad, ig = K.geometry_packed(
                    g.packset.lane_conn,
                    coords,
                    g.ref.dN,
                    g.ref.weights,
                    need_grad,
                    g.packset.nelem,
                    detjw,
                    gradn,
                )
            if bad >= 0:
                _raise_inverted(g.ref, coords, g.conn[bad], bad, ig)

    def geometry(self, g: GroupData, layout: str):
        """Cached (detJw, gradN) for one group, computing on first use."""
        if layout not in g.detjw or layout not in g.gradn:
            self.refresh_geometry(layout, need_grad=True)
        return g.detjw[layout], g.gradn[layout]

    # -- element kernels --------------------------------------------------

    def _element_buffer(self, g: GroupData, kind: KernelKind, layout: str, dim: int):
        key = (kind.is_matrix, kind, layout)
        if key not in g.buffers:
            nn, vs = g.ref.nnodes, self.vector_size
            if kind.is_matrix:
                shape_s, shape_p = (g.nelem, nn, nn), (g.packset.npacks, nn, nn, vs)
            elif kind is KernelKind.MOMENTUM_RHS:
                shape_s, shape_p = (g.nelem, nn, dim), (g.packset.npacks, nn, dim, vs)
            else:
                shape_s, shape_p = (g.nelem, nn), (g.packset.npacks, nn, vs)
            if layout == "scalar":
                g.buffers[key] = np.zeros(shape_s)
            else:
                g.buffers[key] = aligned_zeros(shape_p)
        buf = g.buffers[key]
        buf[...] = 0.0
        return buf

    def _run_kernel(self, kind, g, layout, out, velocity, scalar, rho, mu, kappa):
        detjw, gradn = self.geometry(g, layout)
        N = g.ref.N
        if layout == "scalar":
            conn = g.conn
            if kind is KernelKind.MASS:
                K.mass_scalar(detjw, N, out)
            elif kind is KernelKind.LAPLACIAN:
                K.laplacian_scalar(detjw, gradn, out)
            elif kind is KernelKind.CONVECTION:
                K.convection_scalar(detjw, gradn, N, conn, velocity, out)
            elif kind is KernelKind.MOMENTUM_RHS:
                K.momentum_rhs_scalar(detjw, gradn, N, conn, velocity, rho, mu, out)
            else:
                K.scalar_rhs_scalar(detjw, gradn, N, conn, velocity, scalar, kappa, out)
        else:
            lane_conn = g.packset.lane_conn
            if kind is KernelKind.MASS:
                K.mass_packed(detjw, N, out)
            elif kind is KernelKind.LAPLACIAN:
                K.laplacian_packed(detjw, gradn, out)
            elif kind is KernelKind.CONVECTION:
                K.convection_packed(detjw, gradn, N, lane_conn, velocity, out)
            elif kind is KernelKind.MOMENTUM_RHS:
                K.momentum_rhs_packed(detjw, gradn, N, lane_conn, velocity, rho, mu, out)
            else:
                K.scalar_rhs_packed(detjw, gradn, N, lane_conn, velocity, scalar, kappa, out)

    # -- global assembly --------------------------------------------------

    def _vals_buffer(self, layout: str, reuse: bool) -> np.ndarray:
        if not reuse:
            return np.zeros(self.pattern.nnz)
        if layout not in self._vals:
            self._vals[layout] = np.zeros(self.pattern.nnz)
        buf = self._vals[layout]
        buf[...] = 0.0
        return buf

    def assemble_matrix(
        self,
        kind: KernelKind,
        layout: str = "packed",
        velocity: np.ndarray | None = None,
        reuse: bool = False,
    ) -> CsrMatrix:
        """Assemble a global matrix; returns the shared pattern with values.

        With reuse=True the value buffer is owned by the context and
        overwritten by the next reusing call for the same layout.
        """
        if not kind.is_matrix:
            raise ConfigurationError(f"{kind.name} does not assemble a matrix")
        _check_layout(layout)
        _check_fields(kind, velocity, None)
        vals = self._vals_buffer(layout, reuse)
        for g in self.groups:
            out = self._element_buffer(g, kind, layout, self.mesh.dim)
            self._run_kernel(kind, g, layout, out, velocity, None, 1.0, 0.0, 0.0)
            if layout == "scalar":
                K.scatter_matrix_scalar(out, g.pos_scalar, vals)
            else:
                K.scatter_matrix_packed(out, g.pos_packed, vals)
        return self.pattern.with_vals(vals)

    def assemble_rhs(
        self,
        kind: KernelKind,
        layout: str = "packed",
        velocity: np.ndarray | None = None,
        scalar: np.ndarray | None = None,
        rho: float = 1.0,
        mu: float = 0.0,
        kappa: float = 0.0,
    ) -> np.ndarray:
        """Assemble a global right-hand side vector.

        MOMENTUM_RHS returns shape (nnode, dim); SCALAR_RHS returns
        (nnode,).  `velocity` is required for both; `scalar` for the
        scalar transport kernel.
        """
        if kind.is_matrix:
            raise ConfigurationError(f"{kind.name} does not assemble an RHS")
        _check_layout(layout)
        _check_fields(kind, velocity, scalar)
        n, dim = self.mesh.nnode, self.mesh.dim
        rhs = np.zeros((n, dim)) if kind is KernelKind.MOMENTUM_RHS else np.zeros(n)
        for g in self.groups:
            out = self._element_buffer(g, kind, layout, dim)
            self._run_kernel(kind, g, layout, out, velocity, scalar, rho, mu, kappa)
            if kind is KernelKind.MOMENTUM_RHS:
                if layout == "scalar":
                    K.scatter_vector_dim_scalar(out, g.conn, rhs)
                else:
                    K.scatter_vector_dim_packed(out, g.packset.lane_conn, rhs)
            else:
                if layout == "scalar":
                    K.scatter_vector_scalar(out, g.conn, rhs)
                else:
                    K.scatter_vector_packed(out, g.packset.lane_conn, rhs)
        return rhs


def _check_layout(layout: str) -> None:
    if layout not in LAYOUTS:
        raise ConfigurationError(f"layout must be one of {LAYOUTS}, got {layout!r}")


def _raise_inverted(ref, coords, row, elem, ig):
    """Recompute the bad element to recover det for the error message."""
    try:
        compute_geometry(ref, coords[row])
    except InvertedElementError as err:
        raise InvertedElementError(elem, err.gauss_point, err.det) from None
    raise InvertedElementError(elem, ig, float("nan"))


def _check_fields(kind, velocity, scalar):
    if kind is KernelKind.MASS or kind is KernelKind.LAPLACIAN:
        return
    if velocity is None:
        raise ConfigurationError(f"{kind.name} needs a velocity field")
    if kind is KernelKind.SCALAR_RHS and scalar is None:
        raise ConfigurationError("SCALAR_RHS needs a scalar field")


def assemble_element_scalar(
    kind: KernelKind,
    ref: ReferenceElement,
    conn: np.ndarray,
    coords: np.ndarray,
    velocity: np.ndarray | None = None,
    scalar: np.ndarray | None = None,
    rho: float = 1.0,
    mu: float = 0.0,
    kappa: float = 0.0,
) -> np.ndarray:
    """Element-local contributions of one connectivity block, one at a time.

    Returns (nelem, nn, nn) for matrix kinds, (nelem, nn, dim) for the
    momentum RHS and (nelem, nn) for scalar transport.
    """
    ne, nn = conn.shape
    dim, ng = ref.dim, ref.ngauss
    detjw = np.empty((ne, ng))
    gradn = np.empty((ne, dim, nn, ng))
    bad, ig = K.geometry_scalar(conn, coords, ref.dN, ref.weights, True, detjw, gradn)
    if bad >= 0:
        _raise_inverted(ref, coords, conn[bad], bad, ig)
    if kind.is_matrix:
        out = np.zeros((ne, nn, nn))
    elif kind is KernelKind.MOMENTUM_RHS:
        out = np.zeros((ne, nn, dim))
    else:
        out = np.zeros((ne, nn))
    N = ref.N
    if kind is KernelKind.MASS:
        K.mass_scalar(detjw, N, out)
    elif kind is KernelKind.LAPLACIAN:
        K.laplacian_scalar(detjw, gradn, out)
    elif kind is KernelKind.CONVECTION:
        K.convection_scalar(detjw, gradn, N, conn, velocity, out)
    elif kind is KernelKind.MOMENTUM_RHS:
        K.momentum_rhs_scalar(detjw, gradn, N, conn, velocity, rho, mu, out)
    else:
        K.scalar_rhs_scalar(detjw, gradn, N, conn, velocity, scalar, kappa, out)
    return out


def assemble_element_packed(
    kind: KernelKind,
    ref: ReferenceElement,
    packset: PackSet,
    coords: np.ndarray,
    velocity: np.ndarray | None = None,
    scalar: np.ndarray | None = None,
    rho: float = 1.0,
    mu: float = 0.0,
    kappa: float = 0.0,
) -> np.ndarray:
    """Lane-major element contributions; the lane axis is last."""
    nn, vs = ref.nnodes, packset.vector_size
    npacks = packset.npacks
    dim, ng = ref.dim, ref.ngauss
    detjw = aligned_zeros((npacks, ng, vs))
    gradn = aligned_zeros((npacks, dim, nn, ng, vs))
    bad, ig = K.geometry_packed(
        packset.lane_conn, coords, ref.dN, ref.weights, True, packset.nelem, detjw, gradn
    )
    if bad >= 0:
        p, v = divmod(bad, packset.vector_size)
        _raise_inverted(ref, coords, packset.lane_conn[p, :, v], bad, ig)
    if kind.is_matrix:
        out = aligned_zeros((npacks, nn, nn, vs))
    elif kind is KernelKind.MOMENTUM_RHS:
        out = aligned_zeros((npacks, nn, dim, vs))
    else:
        out = aligned_zeros((npacks, nn, vs))
    N = ref.N
    lane_conn = packset.lane_conn
    if kind is KernelKind.MASS:
        K.mass_packed(detjw, N, out)
    elif kind is KernelKind.LAPLACIAN:
        K.laplacian_packed(detjw, gradn, out)
    elif kind is KernelKind.CONVECTION:
        K.convection_packed(detjw, gradn, N, lane_conn, velocity, out)
    elif kind is KernelKind.MOMENTUM_RHS:
        K.momentum_rhs_packed(detjw, gradn, N, lane_conn, velocity, rho, mu, out)
    else:
        K.scalar_rhs_packed(detjw, gradn, N, lane_conn, velocity, scalar, kappa, out)
    return out


def assemble_boundary(
    mesh: Mesh, pattern: CsrMatrix, alpha: float = 0.0, beta: float = 0.0
) -> tuple[CsrMatrix, np.ndarray]:
    """Robin boundary contributions: alpha * face mass and beta * face load.

    Faces are processed vectorized per node-count group; the surface
    element is sqrt(det(J^T J)) of the face map.  Both coefficients zero
    returns zero-valued structures untouched.
    """
    vals = np.zeros(pattern.nnz)
    rhs = np.zeros(pattern.n)
    if alpha == 0.0 and beta == 0.0:
        return pattern.with_vals(vals), rhs
    for fg in mesh.boundary:
        fr = face_rule(fg.nnodes)
        x = mesh.coords[fg.conn]
        J = np.einsum("fad,lag->fgdl", x, fr.dN)
        if mesh.dim == 2:
            dA = np.linalg.norm(J[..., 0], axis=-1)
        else:
            dA = np.linalg.norm(np.cross(J[..., 0], J[..., 1]), axis=-1)
        w = dA * fr.weights
        if alpha != 0.0:
            Me = alpha * np.einsum("fg,ig,jg->fij", w, fr.N, fr.N)
            np.add.at(vals, matrix_positions(fg.conn, pattern), Me)
        if beta != 0.0:
            re = beta * np.einsum("fg,ig->fi", w, fr.N)
            np.add.at(rhs, fg.conn, re)
    return pattern.with_vals(vals), rhs
