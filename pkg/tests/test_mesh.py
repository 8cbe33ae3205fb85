"""Generators: counts, volumes, conformity, boundary orientation."""

import numpy as np
import pytest

from fempack.elements import (
    ElementType,
    compute_geometry,
    face_rule,
    reference_element,
)
from fempack.mesh import (
    ElementGroup,
    Mesh,
    extract_boundary,
    generate_box_mesh,
    generate_mixed_mesh,
    renumber_by_type,
)


def mesh_volume(mesh):
    """Sum of per-element quadrature volumes."""
    total = 0.0
    for g in mesh.groups:
        ref = reference_element(g.etype)
        for row in g.conn:
            total += compute_geometry(ref, mesh.coords[row]).detJw.sum()
    return total


def boundary_flux_moments(mesh):
    """Quadrature of (n, x . n) over all boundary faces, outward normals."""
    n_total = np.zeros(mesh.dim)
    xn_total = 0.0
    for fg in mesh.boundary:
        fr = face_rule(fg.nnodes)
        for row in fg.conn:
            x = mesh.coords[row]
            for ig in range(fr.ngauss):
                J = x.T @ fr.dN[:, :, ig].T
                if mesh.dim == 2:
                    nvec = np.array([J[1, 0], -J[0, 0]])
                else:
                    nvec = np.cross(J[:, 0], J[:, 1])
                xg = x.T @ fr.N[:, ig]
                n_total += fr.weights[ig] * nvec
                xn_total += fr.weights[ig] * float(xg @ nvec)
    return n_total, xn_total


CASES = [
    (ElementType.QUAD04, (3, 2, 1), 6, 12),
    (ElementType.TRI03, (3, 2, 1), 12, 12),
    (ElementType.HEX08, (3, 2, 2), 12, 36),
    (ElementType.TET04, (2, 2, 2), 48, 8 * 3 + 3),
    (ElementType.PYR05, (2, 2, 2), 48, 27 + 8),
]


@pytest.mark.parametrize("etype,cells,nelem,nnode", CASES)
def test_generator_counts(etype, cells, nelem, nnode):
    mesh = generate_box_mesh(etype, *cells)
    assert mesh.nelem == nelem
    assert mesh.nnode == nnode
    assert mesh.element_counts() == {etype: nelem}


@pytest.mark.parametrize("etype,cells,nelem,nnode", CASES)
def test_generator_volume_and_positive_jacobians(etype, cells, nelem, nnode):
    lengths = (1.2, 0.7) if etype in (ElementType.TRI03, ElementType.QUAD04) else (
        1.2,
        0.7,
        1.5,
    )
    mesh = generate_box_mesh(etype, *cells, lengths=lengths)
    # compute_geometry raises on any non-positive Jacobian
    assert mesh_volume(mesh) == pytest.approx(float(np.prod(lengths)), abs=1e-10)


@pytest.mark.parametrize("etype,cells,nelem,nnode", CASES)
def test_boundary_closes_and_points_outward(etype, cells, nelem, nnode):
    mesh = generate_box_mesh(etype, *cells)
    n_total, xn_total = boundary_flux_moments(mesh)
    # closed surface: normals integrate to zero; x.n integrates to dim*V
    np.testing.assert_allclose(n_total, 0.0, atol=1e-12)
    assert xn_total == pytest.approx(mesh.dim * 1.0, abs=1e-10)


def test_hex_boundary_face_count():
    mesh = generate_box_mesh(ElementType.HEX08, 3, 3, 3)
    assert sum(fg.nfaces for fg in mesh.boundary) == 6 * 9


def test_tet_boundary_face_count():
    mesh = generate_box_mesh(ElementType.TET04, 2, 2, 2)
    # each boundary cube face contributes two triangles
    assert sum(fg.nfaces for fg in mesh.boundary) == 6 * 4 * 2


def test_mixed_mesh_small_example():
    mesh = generate_mixed_mesh(2, 1, 1, fraction=0.5)
    assert mesh.element_counts() == {ElementType.PYR05: 6, ElementType.HEX08: 1}
    assert mesh_volume(mesh) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("fraction,expected", [
    (0.0, {ElementType.HEX08: 8}),
    (1.0, {ElementType.PYR05: 48}),
    (0.5, {ElementType.PYR05: 24, ElementType.HEX08: 4}),
])
def test_mixed_mesh_fractions(fraction, expected):
    mesh = generate_mixed_mesh(2, 2, 2, fraction=fraction)
    assert mesh.element_counts() == expected


def test_mixed_mesh_conforming_boundary():
    mesh = generate_mixed_mesh(3, 2, 2, fraction=0.5)
    n_total, xn_total = boundary_flux_moments(mesh)
    np.testing.assert_allclose(n_total, 0.0, atol=1e-12)
    assert xn_total == pytest.approx(3.0, abs=1e-10)
    assert mesh_volume(mesh) == pytest.approx(1.0, abs=1e-10)


def _interleaved_demo_mesh(n_tri=25, n_quad=18):
    """Alternating tiny groups of triangles and quads on a shared grid."""
    base = generate_box_mesh(ElementType.QUAD04, 7, 4)
    quads = base.groups[0].conn
    tris = np.concatenate([quads[:, (0, 1, 2)], quads[:, (0, 2, 3)]], axis=0)
    groups = []
    ti = qi = 0
    while ti < n_tri or qi < n_quad:
        if ti < n_tri:
            take = min(4, n_tri - ti)
            groups.append(ElementGroup(ElementType.TRI03, tris[ti : ti + take]))
            ti += take
        if qi < n_quad:
            take = min(3, n_quad - qi)
            groups.append(ElementGroup(ElementType.QUAD04, quads[qi : qi + take]))
            qi += take
    return Mesh(2, base.coords, groups)


def test_renumber_groups_interleaved_types():
    mesh = _interleaved_demo_mesh()
    assert not mesh.is_grouped_by_type()
    grouped, perm = renumber_by_type(mesh)
    assert grouped.is_grouped_by_type()
    assert [g.etype for g in grouped.groups] == [ElementType.TRI03, ElementType.QUAD04]
    assert [g.nelem for g in grouped.groups] == [25, 18]
    # permutation is a bijection and maps elements faithfully
    np.testing.assert_array_equal(perm.forward[perm.inverse], np.arange(43))
    old_elems = [tuple(r) for g in mesh.groups for r in g.conn]
    new_elems = [tuple(r) for g in grouped.groups for r in g.conn]
    assert new_elems == [old_elems[i] for i in perm.inverse]


def test_renumber_is_stable_within_type():
    mesh = _interleaved_demo_mesh(5, 4)
    grouped, perm = renumber_by_type(mesh)
    tris_old = [tuple(r) for g in mesh.groups if g.etype is ElementType.TRI03 for r in g.conn]
    tris_new = [tuple(r) for r in grouped.groups[0].conn]
    assert tris_new == tris_old


def test_renumber_identity_on_grouped_mesh():
    mesh = generate_mixed_mesh(2, 2, 2, fraction=0.5)
    grouped, perm = renumber_by_type(mesh)
    np.testing.assert_array_equal(perm.forward, np.arange(mesh.nelem))
    for a, b in zip(mesh.groups, grouped.groups):
        np.testing.assert_array_equal(a.conn, b.conn)


def test_renumber_remaps_boundary_owners():
    mesh = _interleaved_demo_mesh()
    mesh.boundary = extract_boundary(mesh.groups)
    grouped, perm = renumber_by_type(mesh)
    all_conn = [tuple(r) for g in grouped.groups for r in g.conn]
    for fg_old, fg_new in zip(mesh.boundary, grouped.boundary):
        np.testing.assert_array_equal(fg_new.owner, perm.forward[fg_old.owner])
        # faces still belong to their owners after remapping
        for owner, face in zip(fg_new.owner, fg_new.conn):
            assert set(face).issubset(set(all_conn[owner]))


def test_validate_rejects_out_of_range_index():
    mesh = generate_box_mesh(ElementType.QUAD04, 2, 2)
    mesh.groups[0].conn[0, 0] = 99
    with pytest.raises(ValueError, match="out of range"):
        mesh.validate()


def test_validate_rejects_wrong_dimension_type():
    mesh = generate_box_mesh(ElementType.QUAD04, 2, 2)
    mesh.groups[0] = ElementGroup(ElementType.HEX08, np.zeros((1, 8), dtype=np.int64))
    with pytest.raises(ValueError, match="3D|2D"):
        mesh.validate()


def test_validate_rejects_overshared_face():
    # three quads on the same four nodes share each edge three times
    coords = np.array([(0, 0), (1, 0), (1, 1), (0, 1)], dtype=float)
    conn = np.tile([0, 1, 2, 3], (3, 1)).astype(np.int64)
    mesh = Mesh(2, coords, [ElementGroup(ElementType.QUAD04, conn)])
    with pytest.raises(ValueError, match="more than 2"):
        mesh.validate()


def test_generator_rejects_bad_cell_counts():
    with pytest.raises(ValueError):
        generate_box_mesh(ElementType.HEX08, 0, 1, 1)
    with pytest.raises(ValueError):
        generate_mixed_mesh(2, 2, 2, fraction=1.5)
