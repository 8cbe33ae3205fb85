"""Compiled assembly kernels, scalar and lane-packed variants.

Each kernel exists twice: the scalar variant loops over elements one at a
time, the packed variant loops over packs with the lane index innermost.
Lane loops touch unit-stride memory (the lane axis is last in every
packed tensor), so the compiler can vectorize them; element lanes are
independent, which keeps that legal without fast-math.  Both variants
execute the same arithmetic per element in the same order, so their
results agree to rounding.

Geometry kernels return (element, gauss point) of the first non-positive
Jacobian determinant, or (-1, -1) on success; callers turn that into an
exception.  Packed geometry zeroes detJw on padded lanes, which makes all
padded-lane contributions vanish downstream.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def geometry_scalar(conn, coords, dN, wg, need_grad, detjw, gradn):
    ne, nn = conn.shape
    dim, _, ng = dN.shape
    xe = np.empty((nn, dim))
    J = np.empty((dim, dim))
    Ji = np.empty((dim, dim))
    for e in range(ne):
        for a in range(nn):
            node = conn[e, a]
            for d in range(dim):
                xe[a, d] = coords[node, d]
        for ig in range(ng):
            for d in range(dim):
                for l in range(dim):
                    acc = 0.0
                    for a in range(nn):
                        acc += xe[a, d] * dN[l, a, ig]
                    J[d, l] = acc
            if dim == 2:
                det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
            else:
                det = (
                    J[0, 0] * (J[1, 1] * J[2, 2] - J[1, 2] * J[2, 1])
                    - J[0, 1] * (J[1, 0] * J[2, 2] - J[1, 2] * J[2, 0])
                    + J[0, 2] * (J[1, 0] * J[2, 1] - J[1, 1] * J[2, 0])
                )
            if det <= 0.0:
                return e, ig
            detjw[e, ig] = det * wg[ig]
            if need_grad:
                inv = 1.0 / det
                if dim == 2:
                    Ji[0, 0] = J[1, 1] * inv
                    Ji[0, 1] = -J[0, 1] * inv
                    Ji[1, 0] = -J[1, 0] * inv
                    Ji[1, 1] = J[0, 0] * inv
                else:
                    Ji[0, 0] = (J[1, 1] * J[2, 2] - J[1, 2] * J[2, 1]) * inv
                    Ji[0, 1] = (J[0, 2] * J[2, 1] - J[0, 1] * J[2, 2]) * inv
                    Ji[0, 2] = (J[0, 1] * J[1, 2] - J[0, 2] * J[1, 1]) * inv
                    Ji[1, 0] = (J[1, 2] * J[2, 0] - J[1, 0] * J[2, 2]) * inv
                    Ji[1, 1] = (J[0, 0] * J[2, 2] - J[0, 2] * J[2, 0]) * inv
                    Ji[1, 2] = (J[0, 2] * J[1, 0] - J[0, 0] * J[1, 2]) * inv
                    Ji[2, 0] = (J[1, 0] * J[2, 1] - J[1, 1] * J[2, 0]) * inv
                    Ji[2, 1] = (J[0, 1] * J[2, 0] - J[0, 0] * J[2, 1]) * inv
                    Ji[2, 2] = (J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]) * inv
                # physical gradient: gradN[d] = sum_l Ji[l, d] * dN[l]
                for a in range(nn):
                    for d in range(dim):
                        acc = 0.0
                        for l in range(dim):
                            acc += Ji[l, d] * dN[l, a, ig]
                        gradn[e, d, a, ig] = acc
    return -1, -1


@njit(cache=True)
def geometry_packed(lane_conn, coords, dN, wg, need_grad, nelem, detjw, gradn):
    npacks, nn, vs = lane_conn.shape
    dim, _, ng = dN.shape
    xe = np.empty((nn, dim, vs))
    J = np.empty((dim, dim, vs))
    Ji = np.empty((dim, dim, vs))
    det = np.empty(vs)
    for p in range(npacks):
        nact = min(vs, nelem - p * vs)
        for a in range(nn):
            for d in range(dim):
                for v in range(vs):
                    xe[a, d, v] = coords[lane_conn[p, a, v], d]
        for ig in range(ng):
            for d in range(dim):
                for l in range(dim):
                    for v in range(vs):
                        J[d, l, v] = 0.0
                    for a in range(nn):
                        for v in range(vs):
                            J[d, l, v] += xe[a, d, v] * dN[l, a, ig]
            if dim == 2:
                for v in range(vs):
                    det[v] = J[0, 0, v] * J[1, 1, v] - J[0, 1, v] * J[1, 0, v]
            else:
                for v in range(vs):
                    det[v] = (
                        J[0, 0, v] * (J[1, 1, v] * J[2, 2, v] - J[1, 2, v] * J[2, 1, v])
                        - J[0, 1, v]
                        * (J[1, 0, v] * J[2, 2, v] - J[1, 2, v] * J[2, 0, v])
                        + J[0, 2, v]
                        * (J[1, 0, v] * J[2, 1, v] - J[1, 1, v] * J[2, 0, v])
                    )
            for v in range(nact):
                if det[v] <= 0.0:
                    return p * vs + v, ig
            for v in range(vs):
                detjw[p, ig, v] = det[v] * wg[ig]
            # padded lanes integrate nothing
            for v in range(nact, vs):
                detjw[p, ig, v] = 0.0
            if need_grad:
                if dim == 2:
                    for v in range(vs):
                        inv = 1.0 / det[v]
                        Ji[0, 0, v] = J[1, 1, v] * inv
                        Ji[0, 1, v] = -J[0, 1, v] * inv
                        Ji[1, 0, v] = -J[1, 0, v] * inv
                        Ji[1, 1, v] = J[0, 0, v] * inv
                else:
                    for v in range(vs):
                        inv = 1.0 / det[v]
                        Ji[0, 0, v] = (J[1, 1, v] * J[2, 2, v] - J[1, 2, v] * J[2, 1, v]) * inv
                        Ji[0, 1, v] = (J[0, 2, v] * J[2, 1, v] - J[0, 1, v] * J[2, 2, v]) * inv
                        Ji[0, 2, v] = (J[0, 1, v] * J[1, 2, v] - J[0, 2, v] * J[1, 1, v]) * inv
                        Ji[1, 0, v] = (J[1, 2, v] * J[2, 0, v] - J[1, 0, v] * J[2, 2, v]) * inv
                        Ji[1, 1, v] = (J[0, 0, v] * J[2, 2, v] - J[0, 2, v] * J[2, 0, v]) * inv
                        Ji[1, 2, v] = (J[0, 2, v] * J[1, 0, v] - J[0, 0, v] * J[1, 2, v]) * inv
                        Ji[2, 0, v] = (J[1, 0, v] * J[2, 1, v] - J[1, 1, v] * J[2, 0, v]) * inv
                        Ji[2, 1, v] = (J[0, 1, v] * J[2, 0, v] - J[0, 0, v] * J[2, 1, v]) * inv
                        Ji[2, 2, v] = (J[0, 0, v] * J[1, 1, v] - J[0, 1, v] * J[1, 0, v]) * inv
                for a in range(nn):
                    for d in range(dim):
                        for v in range(vs):
                            acc = 0.0
                            for l in range(dim):
                                acc += Ji[l, d, v] * dN[l, a, ig]
                            gradn[p, d, a, ig, v] = acc
    return -1, -1


@njit(cache=True)
def mass_scalar(detjw, N, out):
    ne, ng = detjw.shape
    nn = N.shape[0]
    for e in range(ne):
        for ig in range(ng):
            w = detjw[e, ig]
            for j in range(nn):
                c = w * N[j, ig]
                for i in range(nn):
                    out[e, i, j] += c * N[i, ig]


@njit(cache=True)
def mass_packed(detjw, N, out):
    npacks, ng, vs = detjw.shape
    nn = N.shape[0]
    for p in range(npacks):
        for ig in range(ng):
            for j in range(nn):
                for i in range(nn):
                    for v in range(vs):
                        out[p, i, j, v] += detjw[p, ig, v] * N[j, ig] * N[i, ig]


@njit(cache=True)
def laplacian_scalar(detjw, gradn, out):
    ne, ng = detjw.shape
    dim = gradn.shape[1]
    nn = gradn.shape[2]
    for e in range(ne):
        for ig in range(ng):
            w = detjw[e, ig]
            for j in range(nn):
                for i in range(nn):
                    acc = 0.0
                    for d in range(dim):
                        acc += gradn[e, d, i, ig] * gradn[e, d, j, ig]
                    out[e, i, j] += w * acc


@njit(cache=True)
def laplacian_packed(detjw, gradn, out):
    npacks, ng, vs = detjw.shape
    dim = gradn.shape[1]
    nn = gradn.shape[2]
    acc = np.empty(vs)
    for p in range(npacks):
        for ig in range(ng):
            for j in range(nn):
                for i in range(nn):
                    for v in range(vs):
                        acc[v] = 0.0
                    for d in range(dim):
                        for v in range(vs):
                            acc[v] += gradn[p, d, i, ig, v] * gradn[p, d, j, ig, v]
                    for v in range(vs):
                        out[p, i, j, v] += detjw[p, ig, v] * acc[v]


@njit(cache=True)
def convection_scalar(detjw, gradn, N, conn, vel, out):
    ne, ng = detjw.shape
    dim = gradn.shape[1]
    nn = gradn.shape[2]
    ue = np.empty((nn, dim))
    ug = np.empty(dim)
    for e in range(ne):
        for a in range(nn):
            node = conn[e, a]
            for d in range(dim):
                ue[a, d] = vel[node, d]
        for ig in range(ng):
            w = detjw[e, ig]
            for d in range(dim):
                acc = 0.0
                for a in range(nn):
                    acc += ue[a, d] * N[a, ig]
                ug[d] = acc
            for j in range(nn):
                adv = 0.0
                for d in range(dim):
                    adv += ug[d] * gradn[e, d, j, ig]
                c = w * adv
                for i in range(nn):
                    out[e, i, j] += c * N[i, ig]


@njit(cache=True)
def convection_packed(detjw, gradn, N, lane_conn, vel, out):
    npacks, ng, vs = detjw.shape
    dim = gradn.shape[1]
    nn = gradn.shape[2]
    ue = np.empty((nn, dim, vs))
    ug = np.empty((dim, vs))
    adv = np.empty(vs)
    for p in range(npacks):
        for a in range(nn):
            for d in range(dim):
                for v in range(vs):
                    ue[a, d, v] = vel[lane_conn[p, a, v], d]
        for ig in range(ng):
            for d in range(dim):
                for v in range(vs):
                    ug[d, v] = 0.0
                for a in range(nn):
                    for v in range(vs):
                        ug[d, v] += ue[a, d, v] * N[a, ig]
            for j in range(nn):
                for v in range(vs):
                    adv[v] = 0.0
                for d in range(dim):
                    for v in range(vs):
                        adv[v] += ug[d, v] * gradn[p, d, j, ig, v]
                for i in range(nn):
                    for v in range(vs):
                        out[p, i, j, v] += detjw[p, ig, v] * adv[v] * N[i, ig]


@njit(cache=True)
def momentum_rhs_scalar(detjw, gradn, N, conn, vel, rho, mu, out):
    ne, ng = detjw.shape
    dim = gradn.shape[1]
    nn = gradn.shape[2]
    ue = np.empty((nn, dim))
    ug = np.empty(dim)
    G = np.empty((dim, dim))
    S = np.empty((dim, dim))
    c = np.empty(dim)
    for e in range(ne):
        for a in range(nn):
            node = conn[e, a]
            for d in range(dim):
                ue[a, d] = vel[node, d]
        for ig in range(ng):
            w = detjw[e, ig]
            for d in range(dim):
                acc = 0.0
                for a in range(nn):
                    acc += ue[a, d] * N[a, ig]
                ug[d] = acc
            # velocity gradient G[l, k] = d u_k / d x_l at the Gauss point
            for l in range(dim):
                for k in range(dim):
                    acc = 0.0
                    for a in range(nn):
                        acc += ue[a, k] * gradn[e, l, a, ig]
                    G[l, k] = acc
            divu = 0.0
            for d in range(dim):
                divu += G[d, d]
            for l in range(dim):
                for k in range(dim):
                    S[l, k] = 0.5 * (G[l, k] + G[k, l])
            # convective term: 2 u.S + (div u) u - grad(|u|^2)/2
            for k in range(dim):
                us = 0.0
                gk = 0.0
                for l in range(dim):
                    us += ug[l] * S[l, k]
                    gk += ug[l] * G[k, l]
                c[k] = 2.0 * us + divu * ug[k] - gk
            for i in range(nn):
                for k in range(dim):
                    visc = 0.0
                    for l in range(dim):
                        visc += S[k, l] * gradn[e, l, i, ig]
                    out[e, i, k] -= w * (rho * N[i, ig] * c[k] + 2.0 * mu * visc)


@njit(cache=True)
def momentum_rhs_packed(detjw, gradn, N, lane_conn, vel, rho, mu, out):
    npacks, ng, vs = detjw.shape
    dim = gradn.shape[1]
    nn = gradn.shape[2]
    ue = np.empty((nn, dim, vs))
    ug = np.empty((dim, vs))
    G = np.empty((dim, dim, vs))
    S = np.empty((dim, dim, vs))
    c = np.empty((dim, vs))
    divu = np.empty(vs)
    visc = np.empty(vs)
    us = np.empty(vs)
    gk = np.empty(vs)
    for p in range(npacks):
        for a in range(nn):
            for d in range(dim):
                for v in range(vs):
                    ue[a, d, v] = vel[lane_conn[p, a, v], d]
        for ig in range(ng):
            for d in range(dim):
                for v in range(vs):
                    ug[d, v] = 0.0
                for a in range(nn):
                    for v in range(vs):
                        ug[d, v] += ue[a, d, v] * N[a, ig]
            for l in range(dim):
                for k in range(dim):
                    for v in range(vs):
                        G[l, k, v] = 0.0
                    for a in range(nn):
                        for v in range(vs):
                            G[l, k, v] += ue[a, k, v] * gradn[p, l, a, ig, v]
            for v in range(vs):
                divu[v] = 0.0
            for d in range(dim):
                for v in range(vs):
                    divu[v] += G[d, d, v]
            for l in range(dim):
                for k in range(dim):
                    for v in range(vs):
                        S[l, k, v] = 0.5 * (G[l, k, v] + G[k, l, v])
            for k in range(dim):
                for v in range(vs):
                    us[v] = 0.0
                    gk[v] = 0.0
                for l in range(dim):
                    for v in range(vs):
                        us[v] += ug[l, v] * S[l, k, v]
                        gk[v] += ug[l, v] * G[k, l, v]
                for v in range(vs):
                    c[k, v] = 2.0 * us[v] + divu[v] * ug[k, v] - gk[v]
            for i in range(nn):
                for k in range(dim):
                    for v in range(vs):
                        visc[v] = 0.0
                    for l in range(dim):
                        for v in range(vs):
                            visc[v] += S[k, l, v] * gradn[p, l, i, ig, v]
                    for v in range(vs):
                        out[p, i, k, v] -= detjw[p, ig, v] * (
                            rho * N[i, ig] * c[k, v] + 2.0 * mu * visc[v]
                        )


@njit(cache=True)
def scalar_rhs_scalar(detjw, gradn, N, conn, vel, phi, kappa, out):
    ne, ng = detjw.shape
    dim = gradn.shape[1]
    nn = gradn.shape[2]
    ue = np.empty((nn, dim))
    fe = np.empty(nn)
    ug = np.empty(dim)
    gphi = np.empty(dim)
    for e in range(ne):
        for a in range(nn):
            node = conn[e, a]
            fe[a] = phi[node]
            for d in range(dim):
                ue[a, d] = vel[node, d]
        for ig in range(ng):
            w = detjw[e, ig]
            for d in range(dim):
                au = 0.0
                ap = 0.0
                for a in range(nn):
                    au += ue[a, d] * N[a, ig]
                    ap += fe[a] * gradn[e, d, a, ig]
                ug[d] = au
                gphi[d] = ap
            adv = 0.0
            for d in range(dim):
                adv += ug[d] * gphi[d]
            for i in range(nn):
                diff = 0.0
                for d in range(dim):
                    diff += gphi[d] * gradn[e, d, i, ig]
                out[e, i] -= w * (N[i, ig] * adv + kappa * diff)


@njit(cache=True)
def scalar_rhs_packed(detjw, gradn, N, lane_conn, vel, phi, kappa, out):
    npacks, ng, vs = detjw.shape
    dim = gradn.shape[1]
    nn = gradn.shape[2]
    ue = np.empty((nn, dim, vs))
    fe = np.empty((nn, vs))
    ug = np.empty((dim, vs))
    gphi = np.empty((dim, vs))
    adv = np.empty(vs)
    diff = np.empty(vs)
    for p in range(npacks):
        for a in range(nn):
            for v in range(vs):
                node = lane_conn[p, a, v]
                fe[a, v] = phi[node]
                for d in range(dim):
                    ue[a, d, v] = vel[node, d]
        for ig in range(ng):
            for d in range(dim):
                for v in range(vs):
                    ug[d, v] = 0.0
                    gphi[d, v] = 0.0
                for a in range(nn):
                    for v in range(vs):
                        ug[d, v] += ue[a, d, v] * N[a, ig]
                        gphi[d, v] += fe[a, v] * gradn[p, d, a, ig, v]
            for v in range(vs):
                adv[v] = 0.0
            for d in range(dim):
                for v in range(vs):
                    adv[v] += ug[d, v] * gphi[d, v]
            for i in range(nn):
                for v in range(vs):
                    diff[v] = 0.0
                for d in range(dim):
                    for v in range(vs):
                        diff[v] += gphi[d, v] * gradn[p, d, i, ig, v]
                for v in range(vs):
                    out[p, i, v] -= detjw[p, ig, v] * (
                        N[i, ig] * adv[v] + kappa * diff[v]
                    )


@njit(cache=True)
def scatter_matrix_scalar(Ae, pos, vals):
    ne, nn, _ = Ae.shape
    for e in range(ne):
        for i in range(nn):
            for j in range(nn):
                vals[pos[e, i, j]] += Ae[e, i, j]


@njit(cache=True)
def scatter_matrix_packed(Ae, pos, vals):
    npacks, nn, _, vs = Ae.shape
    # scatter positions collide across lanes, so this loop stays scalar
    for p in range(npacks):
        for i in range(nn):
            for j in range(nn):
                for v in range(vs):
                    vals[pos[p, i, j, v]] += Ae[p, i, j, v]


@njit(cache=True)
def scatter_vector_scalar(Re, conn, out):
    ne, nn = Re.shape
    for e in range(ne):
        for i in range(nn):
            out[conn[e, i]] += Re[e, i]


@njit(cache=True)
def scatter_vector_packed(Re, lane_conn, out):
    npacks, nn, vs = Re.shape
    for p in range(npacks):
        for i in range(nn):
            for v in range(vs):
                out[lane_conn[p, i, v]] += Re[p, i, v]


@njit(cache=True)
def scatter_vector_dim_scalar(Re, conn, out):
    ne, nn, dim = Re.shape
    for e in range(ne):
        for i in range(nn):
            node = conn[e, i]
            for d in range(dim):
                out[node, d] += Re[e, i, d]


@njit(cache=True)
def scatter_vector_dim_packed(Re, lane_conn, out):
    npacks, nn, dim, vs = Re.shape
    for p in range(npacks):
        for i in range(nn):
            for v in range(vs):
                node = lane_conn[p, i, v]
                for d in range(dim):
                    out[node, d] += Re[p, i, d, v]
