"""Unstructured mesh container and structured box-mesh generators.

Meshes hold node coordinates plus one connectivity block per element type.
Generators produce conforming meshes on an axis-aligned box: hexahedra,
Kuhn tetrahedra (6 per cube), pyramids (6 per cube around its center) and
the 2D quad/triangle analogues, plus a mixed pyramid/hex mesh split by
layers.  Boundary faces are recovered by face counting: a face belonging
to exactly one element is on the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .elements import DIM, ELEMENT_FACES, NNODES, ElementType


@dataclass
class ElementGroup:
    """Connectivity of all elements of one type, shape (nelem, nnodes)."""

    etype: ElementType
    conn: np.ndarray

    @property
    def nelem(self) -> int:
        return self.conn.shape[0]


@dataclass
class FaceGroup:
    """Boundary faces of one node count.

    owner holds the global index of the element each face belongs to;
    conn holds face nodes in outward orientation.
    """

    nnodes: int
    owner: np.ndarray
    conn: np.ndarray

    @property
    def nfaces(self) -> int:
        return self.conn.shape[0]


@dataclass(frozen=True)
class Permutation:
    """Element renumbering: forward maps old index to new, inverse back."""

    forward: np.ndarray
    inverse: np.ndarray


@dataclass
class Mesh:
    dim: int
    coords: np.ndarray
    groups: list[ElementGroup] = field(default_factory=list)
    boundary: list[FaceGroup] = field(default_factory=list)

    @property
    def nnode(self) -> int:
        return self.coords.shape[0]

    @property
    def nelem(self) -> int:
        return sum(g.nelem for g in self.groups)

    def element_counts(self) -> dict[ElementType, int]:
        counts: dict[ElementType, int] = {}
        for g in self.groups:
            counts[g.etype] = counts.get(g.etype, 0) + g.nelem
        return counts

    def is_grouped_by_type(self) -> bool:
        types = [g.etype for g in self.groups]
        return len(types) == len(set(types))

    def boundary_nodes(self) -> np.ndarray:
        """Sorted unique node ids appearing on any boundary face."""
        if not self.boundary:
            return np.empty(0, dtype=np.int64)
        return np.unique(np.concatenate([fg.conn.ravel() for fg in self.boundary]))

    def validate(self) -> None:
        """Raise ValueError on structural defects."""
        if self.dim not in (2, 3):
            raise ValueError(f"unsupported dimension {self.dim}")
        if self.coords.ndim != 2 or self.coords.shape[1] != self.dim:
            raise ValueError("coords must have shape (nnode, dim)")
        if not np.isfinite(self.coords).all():
            raise ValueError("non-finite node coordinates")
        n = self.nnode
        for g in self.groups:
            if DIM[g.etype] != self.dim:
                raise ValueError(f"{g.etype.value} in a {self.dim}D mesh")
            if g.conn.ndim != 2 or g.conn.shape[1] != NNODES[g.etype]:
                raise ValueError(f"bad connectivity shape for {g.etype.value}")
            if g.nelem and (g.conn.min() < 0 or g.conn.max() >= n):
                raise ValueError(f"node index out of range in {g.etype.value}")
        for fg in self.boundary:
            if fg.conn.shape[1] != fg.nnodes:
                raise ValueError("face group width mismatch")
            if fg.nfaces and (fg.conn.min() < 0 or fg.conn.max() >= n):
                raise ValueError("face node index out of range")
            if fg.nfaces and (fg.owner.min() < 0 or fg.owner.max() >= self.nelem):
                raise ValueError("face owner out of range")
        # every face of the mesh may be shared by at most two elements
        for size, counts in _face_counts(self.groups).items():
            if counts.size and counts.max() > 2:
                raise ValueError(f"{size}-node face shared by more than 2 elements")


def _element_faces_by_size(groups: list[ElementGroup]):
    """Yield (size, owner array, oriented face nodes) per face template."""
    offset = 0
    for g in groups:
        for tmpl in ELEMENT_FACES[g.etype]:
            owner = np.arange(offset, offset + g.nelem, dtype=np.int64)
            yield len(tmpl), owner, g.conn[:, tmpl]
        offset += g.nelem


def _face_counts(groups):
    """Occurrence count of every distinct (sorted) face, keyed by size."""
    buckets: dict[int, list[np.ndarray]] = {}
    for size, _, faces in _element_faces_by_size(groups):
        buckets.setdefault(size, []).append(np.sort(faces, axis=1))
    out = {}
    for size, parts in buckets.items():
        allf = np.concatenate(parts, axis=0)
        _, counts = np.unique(allf, axis=0, return_counts=True)
        out[size] = counts
    return out


def extract_boundary(groups: list[ElementGroup]) -> list[FaceGroup]:
    """Return boundary faces (count-1 faces) in outward orientation."""
    buckets: dict[int, list[tuple[np.ndarray, np.ndarray]]] = {}
    for size, owner, faces in _element_faces_by_size(groups):
        buckets.setdefault(size, []).append((owner, faces))
    out = []
    for size in sorted(buckets):
        owners = np.concatenate([o for o, _ in buckets[size]])
        faces = np.concatenate([f for _, f in buckets[size]], axis=0)
        _, inverse, counts = np.unique(
            np.sort(faces, axis=1), axis=0, return_inverse=True, return_counts=True
        )
        keep = counts[inverse] == 1
        if keep.any():
            out.append(FaceGroup(size, owners[keep], faces[keep]))
    return out


def _grid(nx, ny, nz, lengths, dim):
    """Node coordinates of a structured grid plus an index helper."""
    if dim == 2:
        lx, ly = lengths
        xs = np.linspace(0.0, lx, nx + 1)
        ys = np.linspace(0.0, ly, ny + 1)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        coords = np.stack([X.T.ravel(), Y.T.ravel()], axis=1)

        def nid(i, j):
            return i + (nx + 1) * j

        return coords, nid
    lx, ly, lz = lengths
    xs = np.linspace(0.0, lx, nx + 1)
    ys = np.linspace(0.0, ly, ny + 1)
    zs = np.linspace(0.0, lz, nz + 1)
    coords = np.empty(((nx + 1) * (ny + 1) * (nz + 1), 3))
    idx = 0
    for k in range(nz + 1):
        for j in range(ny + 1):
            for i in range(nx + 1):
                coords[idx] = (xs[i], ys[j], zs[k])
                idx += 1

    def nid(i, j, k):
        return i + (nx + 1) * (j + (ny + 1) * k)

    return coords, nid


#: hex corner offsets in local node order
_HEX_CORNERS = (
    (0, 0, 0),
    (1, 0, 0),
    (1, 1, 0),
    (0, 1, 0),
    (0, 0, 1),
    (1, 0, 1),
    (1, 1, 1),
    (0, 1, 1),
)

#: hex faces oriented with inward normals; pyramid bases seen from the center
_HEX_INWARD_FACES = (
    (0, 1, 2, 3),
    (4, 7, 6, 5),
    (0, 4, 5, 1),
    (2, 6, 7, 3),
    (0, 3, 7, 4),
    (1, 5, 6, 2),
)

#: axis permutations of the Kuhn subdivision; odd ones get two nodes swapped
_KUHN_PERMS = ((0, 1, 2), (1, 2, 0), (2, 0, 1), (0, 2, 1), (2, 1, 0), (1, 0, 2))
_KUHN_ODD = (False, False, False, True, True, True)


def _hex_cell_nodes(nid, i, j, k):
    return [nid(i + di, j + dj, k + dk) for di, dj, dk in _HEX_CORNERS]


def _cells_3d(nx, ny, nz):
    for k in range(nz):
        for j in range(ny):
            for i in range(nx):
                yield i, j, k


def generate_box_mesh(
    etype: ElementType, nx: int, ny: int, nz: int = 1, lengths=None
) -> Mesh:
    """Mesh the unit box (or `lengths`) with elements of a single type.

    nx, ny, nz count grid cells per direction; each cell becomes 1 hex,
    1 quad, 2 triangles, 6 tetrahedra or 6 pyramids depending on the type.
    nz is ignored for the 2D types.
    """
    if min(nx, ny) < 1 or (DIM[etype] == 3 and nz < 1):
        raise ValueError("cell counts must be at least 1")
    dim = DIM[etype]
    if lengths is None:
        lengths = (1.0,) * dim
    if dim == 2:
        coords, nid = _grid(nx, ny, 0, lengths, 2)
        cells = [(i, j) for j in range(ny) for i in range(nx)]
        conn = []
        for i, j in cells:
            v = (nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1))
            if etype is ElementType.QUAD04:
                conn.append(v)
            elif etype is ElementType.TRI03:
                conn.append((v[0], v[1], v[2]))
                conn.append((v[0], v[2], v[3]))
            else:
                raise ValueError(f"{etype.value} is not a 2D type")
        groups = [ElementGroup(etype, np.asarray(conn, dtype=np.int64))]
        mesh = Mesh(2, coords, groups)
        mesh.boundary = extract_boundary(groups)
        mesh.validate()
        return mesh

    if etype is ElementType.PYR05:
        return generate_mixed_mesh(nx, ny, nz, fraction=1.0, lengths=lengths)

    coords, nid = _grid(nx, ny, nz, lengths, 3)
    conn = []
    if etype is ElementType.HEX08:
        for i, j, k in _cells_3d(nx, ny, nz):
            conn.append(_hex_cell_nodes(nid, i, j, k))
    elif etype is ElementType.TET04:
        # Kuhn subdivision: six tetrahedra per cube sharing the main
        # diagonal; identical in every cube, hence face-conforming.
        for i, j, k in _cells_3d(nx, ny, nz):
            c = [i, j, k]
            v7 = nid(i + 1, j + 1, k + 1)
            for perm, odd in zip(_KUHN_PERMS, _KUHN_ODD):
                p = list(c)
                v0 = nid(*p)
                p[perm[0]] += 1
                v1 = nid(*p)
                p[perm[1]] += 1
                v2 = nid(*p)
                tet = (v0, v1, v7, v2) if odd else (v0, v1, v2, v7)
                conn.append(tet)
    else:
        raise ValueError(f"no generator for {etype.value}")
    groups = [ElementGroup(etype, np.asarray(conn, dtype=np.int64))]
    mesh = Mesh(3, coords, groups)
    mesh.boundary = extract_boundary(groups)
    mesh.validate()
    return mesh


def generate_mixed_mesh(
    nx: int, ny: int, nz: int, fraction: float = 0.5, lengths=None
) -> Mesh:
    """Box mesh mixing pyramid-decomposed and plain hexahedral cells.

    The first ceil(fraction*nx) cell layers along x are split into six
    pyramids around each cell center; the rest stay hexahedra.  The two
    regions are conforming because they meet on plain quad faces.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    if min(nx, ny, nz) < 1:
        raise ValueError("cell counts must be at least 1")
    if lengths is None:
        lengths = (1.0, 1.0, 1.0)
    coords, nid = _grid(nx, ny, nz, lengths, 3)
    nlayers = int(np.ceil(fraction * nx))
    pyr_conn: list[tuple] = []
    hex_conn: list[list[int]] = []
    centers: list[np.ndarray] = []
    next_center = coords.shape[0]
    for i, j, k in _cells_3d(nx, ny, nz):
        cell = _hex_cell_nodes(nid, i, j, k)
        if i < nlayers:
            centers.append(coords[cell].mean(axis=0))
            for face in _HEX_INWARD_FACES:
                pyr_conn.append(tuple(cell[f] for f in face) + (next_center,))
            next_center += 1
        else:
            hex_conn.append(cell)
    if centers:
        coords = np.vstack([coords, np.asarray(centers)])
    groups = []
    if pyr_conn:
        groups.append(
            ElementGroup(ElementType.PYR05, np.asarray(pyr_conn, dtype=np.int64))
        )
    if hex_conn:
        groups.append(
            ElementGroup(ElementType.HEX08, np.asarray(hex_conn, dtype=np.int64))
        )
    mesh = Mesh(3, coords, groups)
    mesh.boundary = extract_boundary(groups)
    mesh.validate()
    return mesh


def renumber_by_type(mesh: Mesh) -> tuple[Mesh, Permutation]:
    """Stably reorder elements so each type forms one contiguous block.

    Types keep their order of first appearance; within a type the original
    element order is preserved.  Returns the regrouped mesh plus the
    old-to-new permutation; boundary face owners are remapped with it.
    """
    type_order: list[ElementType] = []
    for g in mesh.groups:
        if g.etype not in type_order:
            type_order.append(g.etype)
    keys = np.concatenate(
        [np.full(g.nelem, type_order.index(g.etype), dtype=np.int64) for g in mesh.groups]
    ) if mesh.groups else np.empty(0, dtype=np.int64)
    inverse = np.argsort(keys, kind="stable")
    forward = np.empty_like(inverse)
    forward[inverse] = np.arange(len(inverse))
    new_groups = []
    for t in type_order:
        parts = [g.conn for g in mesh.groups if g.etype is t]
        new_groups.append(ElementGroup(t, np.concatenate(parts, axis=0)))
    boundary = [
        FaceGroup(fg.nnodes, forward[fg.owner], fg.conn.copy()) for fg in mesh.boundary
    ]
    out = Mesh(mesh.dim, mesh.coords, new_groups, boundary)
    return out, Permutation(forward=forward, inverse=inverse)
