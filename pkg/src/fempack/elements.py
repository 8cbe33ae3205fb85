"""Reference elements: shape functions, quadrature rules and geometry maps.

Five first-order element types are supported: 3-node triangles, 4-node
quadrilaterals, 4-node tetrahedra, 5-node pyramids and 8-node hexahedra.
Each type carries a fixed quadrature rule exact for (at least) degree-2
polynomials on the reference domain, which is what the bilinear forms
assembled elsewhere require.

Shape function and gradient tables are evaluated once per type at the
quadrature points and cached; all per-element work downstream consumes the
tables, never the symbolic definitions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .errors import InvertedElementError

_SQ3 = 1.0 / math.sqrt(3.0)


class ElementType(Enum):
    TRI03 = "TRI03"
    QUAD04 = "QUAD04"
    TET04 = "TET04"
    PYR05 = "PYR05"
    HEX08 = "HEX08"


#: node count per element type
NNODES = {
    ElementType.TRI03: 3,
    ElementType.QUAD04: 4,
    ElementType.TET04: 4,
    ElementType.PYR05: 5,
    ElementType.HEX08: 8,
}

#: spatial dimension per element type
DIM = {
    ElementType.TRI03: 2,
    ElementType.QUAD04: 2,
    ElementType.TET04: 3,
    ElementType.PYR05: 3,
    ElementType.HEX08: 3,
}

#: measure of the reference domain
REFERENCE_VOLUME = {
    ElementType.TRI03: 0.5,
    ElementType.QUAD04: 4.0,
    ElementType.TET04: 1.0 / 6.0,
    ElementType.PYR05: 4.0 / 3.0,
    ElementType.HEX08: 8.0,
}

#: polynomial degree up to which the quadrature rule is exact
QUADRATURE_DEGREE = {
    ElementType.TRI03: 2,
    ElementType.QUAD04: 3,
    ElementType.TET04: 2,
    ElementType.PYR05: 2,
    ElementType.HEX08: 3,
}

#: faces in outward orientation, as local node indices
ELEMENT_FACES = {
    ElementType.TRI03: ((0, 1), (1, 2), (2, 0)),
    ElementType.QUAD04: ((0, 1), (1, 2), (2, 3), (3, 0)),
    ElementType.TET04: ((0, 2, 1), (0, 1, 3), (1, 2, 3), (0, 3, 2)),
    ElementType.PYR05: ((0, 3, 2, 1), (0, 1, 4), (1, 2, 4), (2, 3, 4), (3, 0, 4)),
    ElementType.HEX08: (
        (0, 3, 2, 1),
        (4, 5, 6, 7),
        (0, 1, 5, 4),
        (2, 3, 7, 6),
        (0, 4, 7, 3),
        (1, 2, 6, 5),
    ),
}


@dataclass(frozen=True)
class ReferenceElement:
    """Tabulated shape functions and quadrature for one element type.

    Attributes
    ----------
    etype : ElementType
    dim : int
        Spatial dimension of the reference domain.
    nnodes : int
    ngauss : int
    gauss_points : ndarray, shape (ngauss, dim)
    weights : ndarray, shape (ngauss,)
    N : ndarray, shape (nnodes, ngauss)
        Shape function values at the quadrature points.
    dN : ndarray, shape (dim, nnodes, ngauss)
        Reference-coordinate gradients at the quadrature points.
    """

    etype: ElementType
    dim: int
    nnodes: int
    ngauss: int
    gauss_points: np.ndarray
    weights: np.ndarray
    N: np.ndarray
    dN: np.ndarray


def _shape_tri03(pts):
    xi, eta = pts[:, 0], pts[:, 1]
    N = np.stack([1.0 - xi - eta, xi, eta])
    dN = np.zeros((2, 3, len(pts)))
    dN[0, 0], dN[0, 1] = -1.0, 1.0
    dN[1, 0], dN[1, 2] = -1.0, 1.0
    return N, dN


def _shape_quad04(pts):
    corners = np.array([(-1, -1), (1, -1), (1, 1), (-1, 1)], dtype=float)
    xi, eta = pts[:, 0], pts[:, 1]
    N = np.empty((4, len(pts)))
    dN = np.empty((2, 4, len(pts)))
    for i, (xc, yc) in enumerate(corners):
        N[i] = 0.25 * (1 + xc * xi) * (1 + yc * eta)
        dN[0, i] = 0.25 * xc * (1 + yc * eta)
        dN[1, i] = 0.25 * yc * (1 + xc * xi)
    return N, dN


def _shape_tet04(pts):
    xi, eta, zeta = pts[:, 0], pts[:, 1], pts[:, 2]
    N = np.stack([1.0 - xi - eta - zeta, xi, eta, zeta])
    dN = np.zeros((3, 4, len(pts)))
    dN[:, 0] = -1.0
    dN[0, 1] = dN[1, 2] = dN[2, 3] = 1.0
    return N, dN


def _shape_hex08(pts):
    corners = np.array(
        [
            (-1, -1, -1),
            (1, -1, -1),
            (1, 1, -1),
            (-1, 1, -1),
            (-1, -1, 1),
            (1, -1, 1),
            (1, 1, 1),
            (-1, 1, 1),
        ],
        dtype=float,
    )
    xi, eta, zeta = pts[:, 0], pts[:, 1], pts[:, 2]
    N = np.empty((8, len(pts)))
    dN = np.empty((3, 8, len(pts)))
    for i, (xc, yc, zc) in enumerate(corners):
        N[i] = 0.125 * (1 + xc * xi) * (1 + yc * eta) * (1 + zc * zeta)
        dN[0, i] = 0.125 * xc * (1 + yc * eta) * (1 + zc * zeta)
        dN[1, i] = 0.125 * yc * (1 + xc * xi) * (1 + zc * zeta)
        dN[2, i] = 0.125 * zc * (1 + xc * xi) * (1 + yc * eta)
    return N, dN


def _shape_pyr05(pts):
    # Rational first-order pyramid basis on the base [-1,1]^2 x {0} with
    # apex (0,0,1).  The xi*eta*zeta/(1-zeta) term keeps the basis linear
    # on each face; quadrature points never touch zeta = 1.
    xi, eta, zeta = pts[:, 0], pts[:, 1], pts[:, 2]
    om = 1.0 - zeta
    # At the apex the rational term vanishes with xi*eta; substitute a safe
    # denominator so evaluating N there yields the correct limit.
    safe = np.where(np.abs(om) > 1e-14, om, 1.0)
    r = zeta / safe
    s = 1.0 / safe**2
    N = np.empty((5, len(pts)))
    dN = np.empty((3, 5, len(pts)))
    signs = (1.0, -1.0, 1.0, -1.0)
    corners = ((-1, -1), (1, -1), (1, 1), (-1, 1))
    for i, ((xc, yc), sg) in enumerate(zip(corners, signs)):
        N[i] = 0.25 * ((1 + xc * xi) * (1 + yc * eta) - zeta + sg * xi * eta * r)
        dN[0, i] = 0.25 * (xc * (1 + yc * eta) + sg * eta * r)
        dN[1, i] = 0.25 * (yc * (1 + xc * xi) + sg * xi * r)
        dN[2, i] = 0.25 * (-1.0 + sg * xi * eta * s)
    N[4] = zeta
    dN[0, 4] = dN[1, 4] = 0.0
    dN[2, 4] = 1.0
    return N, dN


_SHAPE_FUNCS = {
    ElementType.TRI03: _shape_tri03,
    ElementType.QUAD04: _shape_quad04,
    ElementType.TET04: _shape_tet04,
    ElementType.PYR05: _shape_pyr05,
    ElementType.HEX08: _shape_hex08,
}


def _rule_tri03():
    pts = np.array([(1 / 6, 1 / 6), (2 / 3, 1 / 6), (1 / 6, 2 / 3)])
    return pts, np.full(3, 1 / 6)


def _rule_quad04():
    g = [-_SQ3, _SQ3]
    pts = np.array([(x, y) for y in g for x in g])
    return pts, np.ones(4)


def _rule_tet04():
    a = (5.0 + 3.0 * math.sqrt(5.0)) / 20.0
    b = (5.0 - math.sqrt(5.0)) / 20.0
    pts = np.array([(b, b, b), (a, b, b), (b, a, b), (b, b, a)])
    return pts, np.full(4, 1 / 24)


def _rule_hex08():
    g = [-_SQ3, _SQ3]
    pts = np.array([(x, y, z) for z in g for y in g for x in g])
    return pts, np.ones(8)


def _rule_pyr05():
    # Tensor rule on the collapsed coordinates: 2x2 Gauss across the base
    # and a 2-point Gauss-Jacobi rule with weight (1-z)^2 along the axis,
    # which keeps degree-2 monomials on the pyramid exact.  The (1-z)^2
    # volume factor is absorbed into the axial weights.
    zj = np.array([1 / 3 - math.sqrt(10) / 15, 1 / 3 + math.sqrt(10) / 15])
    wj = np.array([1 / 6 + math.sqrt(10) / 48, 1 / 6 - math.sqrt(10) / 48])
    g = [-_SQ3, _SQ3]
    pts, wts = [], []
    for z, wz in zip(zj, wj):
        for b in g:
            for a in g:
                pts.append((a * (1.0 - z), b * (1.0 - z), z))
                wts.append(wz)
    return np.array(pts), np.array(wts)


_RULES = {
    ElementType.TRI03: _rule_tri03,
    ElementType.QUAD04: _rule_quad04,
    ElementType.TET04: _rule_tet04,
    ElementType.PYR05: _rule_pyr05,
    ElementType.HEX08: _rule_hex08,
}


@lru_cache(maxsize=None)
def reference_element(etype: ElementType) -> ReferenceElement:
    """Return the cached quadrature and shape-function tables for a type."""
    pts, wts = _RULES[etype]()
    N, dN = _SHAPE_FUNCS[etype](pts)
    for arr in (pts, wts, N, dN):
        arr.flags.writeable = False
    return ReferenceElement(
        etype=etype,
        dim=DIM[etype],
        nnodes=NNODES[etype],
        ngauss=len(wts),
        gauss_points=pts,
        weights=wts,
        N=np.ascontiguousarray(N),
        dN=np.ascontiguousarray(dN),
    )


@dataclass
class ElementGeometry:
    """Geometry factors of one element at the quadrature points.

    detJw holds det(J) times the quadrature weight; gradN holds physical
    shape-function gradients, indexed [dim, node, gauss point].
    """

    detJw: np.ndarray
    gradN: np.ndarray


def compute_geometry(ref: ReferenceElement, node_coords: np.ndarray) -> ElementGeometry:
    """Map one element's node coordinates to quadrature-point geometry.

    Parameters
    ----------
    ref : ReferenceElement
    node_coords : ndarray, shape (nnodes, dim)

    Raises
    ------
    InvertedElementError
        If det(J) <= 0 at any quadrature point.
    """
    dim, nn, ng = ref.dim, ref.nnodes, ref.ngauss
    detJw = np.empty(ng)
    gradN = np.empty((dim, nn, ng))
    for ig in range(ng):
        # J[d, l] = sum_i x[i, d] * dN[l, i]
        J = node_coords.T @ ref.dN[:, :, ig].T
        det = np.linalg.det(J)
        if det <= 0.0:
            raise InvertedElementError(-1, ig, det)
        detJw[ig] = det * ref.weights[ig]
        gradN[:, :, ig] = np.linalg.inv(J).T @ ref.dN[:, :, ig]
    return ElementGeometry(detJw=detJw, gradN=gradN)


def integrate_reference_monomial(etype: ElementType, powers) -> float:
    """Integrate x^a * y^b (* z^c) over the reference domain by quadrature.

    Used to probe the exactness degree of the stored rules against closed
    forms; returns the quadrature value, not the analytic one.
    """
    ref = reference_element(etype)
    vals = np.ones(ref.ngauss)
    for d, p in enumerate(powers):
        if p:
            vals = vals * ref.gauss_points[:, d] ** p
    return float(np.dot(vals, ref.weights))


@dataclass(frozen=True)
class FaceRule:
    """Quadrature and shape tables for a boundary face of a given size.

    The reference face is the 1D segment [-1,1] for 2-node edges, or the
    TRI03 / QUAD04 reference domain for 3- and 4-node faces.  dN is
    indexed [face_dim, node, gauss point].
    """

    nnodes: int
    dim: int
    ngauss: int
    weights: np.ndarray
    N: np.ndarray
    dN: np.ndarray


@lru_cache(maxsize=None)
def face_rule(nnodes: int) -> FaceRule:
    """Return the face quadrature rule for faces with `nnodes` nodes."""
    if nnodes == 2:
        pts = np.array([-_SQ3, _SQ3])
        wts = np.ones(2)
        N = np.stack([0.5 * (1.0 - pts), 0.5 * (1.0 + pts)])
        dN = np.empty((1, 2, 2))
        dN[0, 0], dN[0, 1] = -0.5, 0.5
        return FaceRule(2, 1, 2, wts, N, dN)
    if nnodes == 3:
        ref = reference_element(ElementType.TRI03)
    elif nnodes == 4:
        ref = reference_element(ElementType.QUAD04)
    else:
        raise ValueError(f"no face rule for {nnodes}-node faces")
    return FaceRule(nnodes, ref.dim, ref.ngauss, ref.weights, ref.N, ref.dN)
