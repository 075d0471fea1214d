"""Element kernels for the 4-node flat shell.

Per node DOF order is ``[ux, uy, uz, rx, ry, rz]``. Each element is built in a
local frame (e1, e2 in the mean plane, e3 = normalized diagonal cross product).
Warped nodes sit at signed offsets ``h`` from that plane and are tied to their
projections by rigid links. The local stiffness combines

* bilinear plane-stress membrane (2x2 Gauss),
* a drilling penalty coupling rz to the membrane rotation,
* Mindlin bending (2x2 Gauss) with Bathe-Dvorkin assumed transverse shear
  tied at the edge midpoints.

Everything is plain numpy on small arrays, so the same source runs compiled
by numba or, with ``PDSOPT_DISABLE_NUMBA=1``, as ordinary Python.
"""
from __future__ import annotations

import math

import numpy as np

from ._accel import njit

SHEAR_FACTOR = 5.0 / 6.0
_G = 1.0 / math.sqrt(3.0)
GAUSS_2x2 = np.array([[-_G, -_G], [_G, -_G], [_G, _G], [-_G, _G]])
NODE_RS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


@njit
def _shape(r, s):
    N = np.empty(4)
    dr = np.empty(4)
    ds = np.empty(4)
    for i in range(4):
        ri = NODE_RS[i, 0]
        si = NODE_RS[i, 1]
        N[i] = 0.25 * (1.0 + ri * r) * (1.0 + si * s)
        dr[i] = 0.25 * ri * (1.0 + si * s)
        ds[i] = 0.25 * si * (1.0 + ri * r)
    return N, dr, ds


@njit
def _jacobian(dr, ds, xl, yl):
    j11 = 0.0
    j12 = 0.0
    j21 = 0.0
    j22 = 0.0
    for i in range(4):
        j11 += dr[i] * xl[i]
        j12 += dr[i] * yl[i]
        j21 += ds[i] * xl[i]
        j22 += ds[i] * yl[i]
    return j11, j12, j21, j22


@njit
def _frame(X):
    """Local frame rows (e1, e2, e3), centroid, and warp offsets of one quad."""
    c = np.zeros(3)
    for i in range(4):
        c += X[i]
    c /= 4.0
    d1 = X[2] - X[0]
    d2 = X[3] - X[1]
    e3 = np.cross(d1, d2)
    e3 /= math.sqrt(np.dot(e3, e3))
    a = (X[1] + X[2]) - (X[0] + X[3])
    a = a - np.dot(a, e3) * e3
    e1 = a / math.sqrt(np.dot(a, a))
    e2 = np.cross(e3, e1)
    R = np.empty((3, 3))
    R[0] = e1
    R[1] = e2
    R[2] = e3
    xl = np.empty(4)
    yl = np.empty(4)
    h = np.empty(4)
    for i in range(4):
        d = X[i] - c
        xl[i] = np.dot(d, e1)
        yl[i] = np.dot(d, e2)
        h[i] = np.dot(d, e3)
    return R, xl, yl, h


@njit
def _local_to_global(R, h):
    """24x24 map from global nodal DOFs to local DOFs of the projected nodes."""
    T = np.zeros((24, 24))
    for i in range(4):
        b = 6 * i
        for p in range(3):
            for q in range(3):
                T[b + p, b + q] = R[p, q]
                T[b + 3 + p, b + 3 + q] = R[p, q]
        # rigid link from node to its projection: u' = u + theta x (-h e3)
        for q in range(3):
            T[b + 0, b + 3 + q] -= h[i] * R[1, q]
            T[b + 1, b + 3 + q] += h[i] * R[0, q]
    return T


@njit
def _shear_rows(r, s, xl, yl):
    """Covariant transverse shear rows (gamma_r, gamma_s) at (r, s)."""
    N, dr, ds = _shape(r, s)
    j11, j12, j21, j22 = _jacobian(dr, ds, xl, yl)
    gr = np.zeros(24)
    gs = np.zeros(24)
    for i in range(4):
        b = 6 * i
        gr[b + 2] = dr[i]
        gr[b + 4] = j11 * N[i]
        gr[b + 3] = -j12 * N[i]
        gs[b + 2] = ds[i]
        gs[b + 4] = j21 * N[i]
        gs[b + 3] = -j22 * N[i]
    return gr, gs


@njit
def _element(X, E, nu, t, drill_ratio):
    """Stiffness (24x24, global), DOF map T, centre stress-resultant operator, load weights, min detJ.

    The resultant operator maps local DOFs to (Nxx, Nyy, Nxy, Dxx, Dyy, Dxy)
    where the last three are ``D_b * curvature``.
    """
    R, xl, yl, h = _frame(X)
    Dm = np.zeros((3, 3))
    Dm[0, 0] = 1.0
    Dm[1, 1] = 1.0
    Dm[0, 1] = nu
    Dm[1, 0] = nu
    Dm[2, 2] = 0.5 * (1.0 - nu)
    Dm *= E / (1.0 - nu * nu)
    Db = Dm * (t**3 / 12.0)
    Dm = Dm * t
    Gs = SHEAR_FACTOR * E / (2.0 * (1.0 + nu)) * t

    # tying points A (0,1), C (0,-1) for gamma_r; D (1,0), B (-1,0) for gamma_s
    grA, _ = _shear_rows(0.0, 1.0, xl, yl)
    grC, _ = _shear_rows(0.0, -1.0, xl, yl)
    _, gsD = _shear_rows(1.0, 0.0, xl, yl)
    _, gsB = _shear_rows(-1.0, 0.0, xl, yl)

    Km = np.zeros((24, 24))
    Kb = np.zeros((24, 24))
    Ks = np.zeros((24, 24))
    Kd = np.zeros((24, 24))
    min_det = np.inf
    for gp in range(4):
        r = GAUSS_2x2[gp, 0]
        s = GAUSS_2x2[gp, 1]
        N, dr, ds = _shape(r, s)
        j11, j12, j21, j22 = _jacobian(dr, ds, xl, yl)
        det = j11 * j22 - j12 * j21
        if det < min_det:
            min_det = det
        i11 = j22 / det
        i12 = -j12 / det
        i21 = -j21 / det
        i22 = j11 / det
        dx = i11 * dr + i12 * ds
        dy = i21 * dr + i22 * ds

        Bm = np.zeros((3, 24))
        Bb = np.zeros((3, 24))
        bd = np.zeros(24)
        for i in range(4):
            b = 6 * i
            Bm[0, b] = dx[i]
            Bm[1, b + 1] = dy[i]
            Bm[2, b] = dy[i]
            Bm[2, b + 1] = dx[i]
            Bb[0, b + 4] = dx[i]
            Bb[1, b + 3] = -dy[i]
            Bb[2, b + 4] = dy[i]
            Bb[2, b + 3] = -dx[i]
            bd[b + 5] = N[i]
            bd[b] = 0.5 * dy[i]
            bd[b + 1] = -0.5 * dx[i]
        gr = 0.5 * (1.0 + s) * grA + 0.5 * (1.0 - s) * grC
        gs = 0.5 * (1.0 + r) * gsD + 0.5 * (1.0 - r) * gsB
        Bs = np.zeros((2, 24))
        Bs[0] = i11 * gr + i12 * gs
        Bs[1] = i21 * gr + i22 * gs

        Km += det * (Bm.T @ (Dm @ Bm))
        Kb += det * (Bb.T @ (Db @ Bb))
        Ks += (det * Gs) * (Bs.T @ Bs)
        Kd += det * np.outer(bd, bd)

    kb_max = 0.0
    kd_max = 0.0
    for i in range(4):
        for q in (3, 4):
            v = Kb[6 * i + q, 6 * i + q]
            if v > kb_max:
                kb_max = v
        v = Kd[6 * i + 5, 6 * i + 5]
        if v > kd_max:
            kd_max = v
    Kl = Km + Kb + Ks + (drill_ratio * kb_max / kd_max) * Kd

    # centre strain and curvature operators
    N, dr, ds = _shape(0.0, 0.0)
    j11, j12, j21, j22 = _jacobian(dr, ds, xl, yl)
    det = j11 * j22 - j12 * j21
    dx = (j22 * dr - j12 * ds) / det
    dy = (-j21 * dr + j11 * ds) / det
    Bc = np.zeros((3, 24))
    Bmc = np.zeros((3, 24))
    for i in range(4):
        b = 6 * i
        Bmc[0, b] = dx[i]
        Bmc[1, b + 1] = dy[i]
        Bmc[2, b] = dy[i]
        Bmc[2, b + 1] = dx[i]
        Bc[0, b + 4] = dx[i]
        Bc[1, b + 3] = -dy[i]
        Bc[2, b + 4] = dy[i]
        Bc[2, b + 3] = -dx[i]

    # area weights on the true bilinear surface: sum_gp N_i |x_r x x_s|, and its plan projection
    w_surf = np.zeros(4)
    w_plan = np.zeros(4)
    for gp in range(4):
        N, dr, ds = _shape(GAUSS_2x2[gp, 0], GAUSS_2x2[gp, 1])
        xr = np.zeros(3)
        xs = np.zeros(3)
        for i in range(4):
            xr += dr[i] * X[i]
            xs += ds[i] * X[i]
        n = np.cross(xr, xs)
        da = math.sqrt(np.dot(n, n))
        for i in range(4):
            w_surf[i] += N[i] * da
            w_plan[i] += N[i] * abs(n[2])

    T = _local_to_global(R, h)
    K = T.T @ (Kl @ T)
    K = 0.5 * (K + K.T)
    S = np.empty((6, 24))
    S[:3] = Dm @ Bmc
    S[3:] = Db @ Bc
    return K, T, S, w_surf, w_plan, min_det


@njit
def _element_batch(X, E, nu, t, drill_ratio):
    ne = X.shape[0]
    K = np.empty((ne, 24, 24))
    T = np.empty((ne, 24, 24))
    MB = np.empty((ne, 6, 24))
    ws = np.empty((ne, 4))
    wp = np.empty((ne, 4))
    dets = np.empty(ne)
    for e in range(ne):
        k, tt, mb, a, b, d = _element(X[e], E, nu, t, drill_ratio)
        K[e] = k
        T[e] = tt
        MB[e] = mb
        ws[e] = a
        wp[e] = b
        dets[e] = d
    return K, T, MB, ws, wp, dets


element_batch = _element_batch
