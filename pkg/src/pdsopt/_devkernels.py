"""Gauss-map kernels: per-point developability terms and their gradient.

Two implementations share one contract:

``evaluate(pts, centers, nbrs, weight, c, eps, delta, want_grad)`` returns
``(face_n, vert_n, areas, A, s, term, grad, bad_point, bad_tri)`` where

* ``pts`` is ``(N, 3)``; ``centers`` ``(P,)``; ``nbrs`` ``(P, 8)`` CCW;
* ``weight[p]`` is 1.0 for points inside the evaluation set and 0.0 otherwise;
* ``s = sqrt(A + delta**2) - delta`` is the smoothed root error;
* ``term = tanh(c * (s + eps))``;
* ``grad`` is ``(N, 3)``, the gradient of ``sum(weight * term)``;
* ``bad_point``/``bad_tri`` locate the first degenerate fan triangle, or -1.

The loop version is compiled by numba; the vectorized one is pure numpy.
Each accumulates in a fixed order, so both are deterministic; they agree
with each other to rounding.
"""
from __future__ import annotations

import math

import numpy as np

from ._accel import USE_NUMBA, njit

PLAN_AREA_FLOOR = 1e-14  # m^2
NORMAL_SUM_FLOOR = 1e-12


@njit
def _cross(a0, a1, a2, b0, b1, b2):
    return a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0


def _evaluate_loop(pts, centers, nbrs, weight, c, eps, delta, want_grad):
    P = centers.shape[0]
    N = pts.shape[0]
    face_n = np.zeros((P, 8, 3))
    vert_n = np.zeros((P, 3))
    areas = np.zeros((P, 8))
    A = np.zeros(P)
    s = np.zeros(P)
    term = np.zeros(P)
    grad = np.zeros((N, 3))
    bad_point = -1
    bad_tri = -1

    e = np.empty((8, 3))
    cn = np.empty(8)
    det_ = np.empty(8)
    den = np.empty(8)
    sph = np.empty(8)
    Nbar = np.empty((8, 3))
    D = np.empty((8, 3))
    E = np.empty((8, 3))

    for p in range(P):
        ic = centers[p]
        px = pts[ic, 0]
        py = pts[ic, 1]
        pz = pts[ic, 2]
        for j in range(8):
            q = nbrs[p, j]
            e[j, 0] = pts[q, 0] - px
            e[j, 1] = pts[q, 1] - py
            e[j, 2] = pts[q, 2] - pz
        m0 = 0.0
        m1 = 0.0
        m2 = 0.0
        for j in range(8):
            k = (j + 1) % 8
            c0, c1, c2 = _cross(e[j, 0], e[j, 1], e[j, 2], e[k, 0], e[k, 1], e[k, 2])
            if 0.5 * abs(c2) < PLAN_AREA_FLOOR and bad_point < 0:
                bad_point = ic
                bad_tri = j
            nrm = math.sqrt(c0 * c0 + c1 * c1 + c2 * c2)
            if nrm == 0.0:
                nrm = 1.0
            cn[j] = nrm
            face_n[p, j, 0] = c0 / nrm
            face_n[p, j, 1] = c1 / nrm
            face_n[p, j, 2] = c2 / nrm
            m0 += face_n[p, j, 0]
            m1 += face_n[p, j, 1]
            m2 += face_n[p, j, 2]
        m0 /= 8.0
        m1 /= 8.0
        m2 /= 8.0
        mn = math.sqrt(m0 * m0 + m1 * m1 + m2 * m2)
        if mn < NORMAL_SUM_FLOOR:
            if bad_point < 0:
                bad_point = ic
                bad_tri = 8
            mn = 1.0
        n0 = m0 / mn
        n1 = m1 / mn
        n2 = m2 / mn
        vert_n[p, 0] = n0
        vert_n[p, 1] = n1
        vert_n[p, 2] = n2
        Ai = 0.0
        for j in range(8):
            k = (j + 1) % 8
            a0 = face_n[p, j, 0]
            a1 = face_n[p, j, 1]
            a2 = face_n[p, j, 2]
            b0 = face_n[p, k, 0]
            b1 = face_n[p, k, 1]
            b2 = face_n[p, k, 2]
            x0, x1, x2 = _cross(b0, b1, b2, n0, n1, n2)
            dt = a0 * x0 + a1 * x1 + a2 * x2
            dn = 1.0 + (a0 * b0 + a1 * b1 + a2 * b2) + (b0 * n0 + b1 * n1 + b2 * n2) + (n0 * a0 + n1 * a1 + n2 * a2)
            ang = 2.0 * math.atan2(dt, dn)
            det_[j] = dt
            den[j] = dn
            sph[j] = ang
            areas[p, j] = abs(ang)
            Ai += ang * ang
        A[p] = Ai
        root = math.sqrt(Ai + delta * delta)
        s[p] = root - delta
        t = math.tanh(c * (s[p] + eps))
        term[p] = t

        if not want_grad or weight[p] == 0.0:
            continue
        # reverse pass: term -> A -> spherical angles -> normals -> cross products -> edges
        dA = weight[p] * c * (1.0 - t * t) * 0.5 / root
        for j in range(8):
            D[j, 0] = 0.0
            D[j, 1] = 0.0
            D[j, 2] = 0.0
        V0 = 0.0
        V1 = 0.0
        V2 = 0.0
        for j in range(8):
            k = (j + 1) % 8
            a0 = face_n[p, j, 0]
            a1 = face_n[p, j, 1]
            a2 = face_n[p, j, 2]
            b0 = face_n[p, k, 0]
            b1 = face_n[p, k, 1]
            b2 = face_n[p, k, 2]
            # d(angle^2) = 2 angle * 2 (den d(det) - det d(den)) / (det^2 + den^2)
            r2 = det_[j] * det_[j] + den[j] * den[j]
            w = dA * 2.0 * sph[j] * 2.0 / r2
            wt = w * den[j]
            wd = -w * det_[j]
            x0, x1, x2 = _cross(b0, b1, b2, n0, n1, n2)
            D[j, 0] += wt * x0 + wd * (b0 + n0)
            D[j, 1] += wt * x1 + wd * (b1 + n1)
            D[j, 2] += wt * x2 + wd * (b2 + n2)
            y0, y1, y2 = _cross(n0, n1, n2, a0, a1, a2)
            D[k, 0] += wt * y0 + wd * (a0 + n0)
            D[k, 1] += wt * y1 + wd * (a1 + n1)
            D[k, 2] += wt * y2 + wd * (a2 + n2)
            z0, z1, z2 = _cross(a0, a1, a2, b0, b1, b2)
            V0 += wt * z0 + wd * (a0 + b0)
            V1 += wt * z1 + wd * (a1 + b1)
            V2 += wt * z2 + wd * (a2 + b2)
        vn = V0 * n0 + V1 * n1 + V2 * n2
        M0 = (V0 - n0 * vn) / mn / 8.0
        M1 = (V1 - n1 * vn) / mn / 8.0
        M2 = (V2 - n2 * vn) / mn / 8.0
        for j in range(8):
            Nbar[j, 0] = D[j, 0] + M0
            Nbar[j, 1] = D[j, 1] + M1
            Nbar[j, 2] = D[j, 2] + M2
            E[j, 0] = 0.0
            E[j, 1] = 0.0
            E[j, 2] = 0.0
        for j in range(8):
            k = (j + 1) % 8
            f0 = face_n[p, j, 0]
            f1 = face_n[p, j, 1]
            f2 = face_n[p, j, 2]
            fN = f0 * Nbar[j, 0] + f1 * Nbar[j, 1] + f2 * Nbar[j, 2]
            C0 = (Nbar[j, 0] - f0 * fN) / cn[j]
            C1 = (Nbar[j, 1] - f1 * fN) / cn[j]
            C2 = (Nbar[j, 2] - f2 * fN) / cn[j]
            x0, x1, x2 = _cross(e[k, 0], e[k, 1], e[k, 2], C0, C1, C2)
            E[j, 0] += x0
            E[j, 1] += x1
            E[j, 2] += x2
            y0, y1, y2 = _cross(C0, C1, C2, e[j, 0], e[j, 1], e[j, 2])
            E[k, 0] += y0
            E[k, 1] += y1
            E[k, 2] += y2
        for j in range(8):
            q = nbrs[p, j]
            grad[q, 0] += E[j, 0]
            grad[q, 1] += E[j, 1]
            grad[q, 2] += E[j, 2]
            grad[ic, 0] -= E[j, 0]
            grad[ic, 1] -= E[j, 1]
            grad[ic, 2] -= E[j, 2]

    return face_n, vert_n, areas, A, s, term, grad, bad_point, bad_tri


_evaluate_jit = njit(_evaluate_loop)


def _evaluate_numpy(pts, centers, nbrs, weight, c, eps, delta, want_grad):
    """Vectorized over all fan centres; same arithmetic as the loop kernel."""
    P = centers.shape[0]
    e = pts[nbrs] - pts[centers][:, None, :]  # (P, 8, 3)
    e1 = np.roll(e, -1, axis=1)
    cr = np.cross(e, e1)
    cn = np.linalg.norm(cr, axis=2)
    plan = 0.5 * np.abs(cr[:, :, 2])
    bad_point, bad_tri = -1, -1
    flagged = np.argwhere(plan < PLAN_AREA_FLOOR)
    cn_safe = np.where(cn == 0.0, 1.0, cn)
    face_n = cr / cn_safe[:, :, None]
    m = face_n.sum(axis=1) / 8.0
    mn = np.linalg.norm(m, axis=1)
    small = np.flatnonzero(mn < NORMAL_SUM_FLOOR)
    if flagged.size or small.size:
        first_tri = flagged[0, 0] if flagged.size else P
        first_sum = small[0] if small.size else P
        if first_tri <= first_sum:
            bad_point, bad_tri = int(centers[flagged[0, 0]]), int(flagged[0, 1])
        else:
            bad_point, bad_tri = int(centers[first_sum]), 8
    mn = np.where(mn < NORMAL_SUM_FLOOR, 1.0, mn)
    vert_n = m / mn[:, None]
    a = face_n
    b = np.roll(face_n, -1, axis=1)
    n = np.broadcast_to(vert_n[:, None, :], a.shape)
    bxn = np.cross(b, n)
    det = np.einsum("pjk,pjk->pj", a, bxn)
    den = 1.0 + np.einsum("pjk,pjk->pj", a, b) + np.einsum("pjk,pjk->pj", b, n) + np.einsum("pjk,pjk->pj", n, a)
    ang = 2.0 * np.arctan2(det, den)
    areas = np.abs(ang)
    A = np.sum(ang * ang, axis=1)
    root = np.sqrt(A + delta * delta)
    s = root - delta
    term = np.tanh(c * (s + eps))
    grad = np.zeros_like(pts)
    if not want_grad:
        return face_n, vert_n, areas, A, s, term, grad, bad_point, bad_tri

    dA = weight * c * (1.0 - term * term) * 0.5 / root
    w = dA[:, None] * 4.0 * ang / (det * det + den * den)
    wt = (w * den)[:, :, None]
    wd = (-w * det)[:, :, None]
    Da = wt * bxn + wd * (b + n)
    Db = wt * np.cross(n, a) + wd * (a + n)
    D = Da + np.roll(Db, 1, axis=1)
    V = (wt * np.cross(a, b) + wd * (a + b)).sum(axis=1)
    vn = np.einsum("pk,pk->p", V, vert_n)
    M = (V - vert_n * vn[:, None]) / mn[:, None] / 8.0
    Nbar = D + M[:, None, :]
    fN = np.einsum("pjk,pjk->pj", face_n, Nbar)
    C = (Nbar - face_n * fN[:, :, None]) / cn_safe[:, :, None]
    E = np.cross(e1, C) + np.roll(np.cross(C, e), 1, axis=1)
    # per-fan scatter in the loop kernel's order: neighbour j then centre
    for j in range(8):
        np.add.at(grad, nbrs[:, j], E[:, j])
    np.add.at(grad, centers, -E.sum(axis=1))
    return face_n, vert_n, areas, A, s, term, grad, bad_point, bad_tri


def evaluate(pts, centers, nbrs, weight, c, eps, delta, want_grad, backend=None):
    """Dispatch to the loop kernel (``"numba"``) or the vectorized one (``"numpy"``).

    The default follows ``PDSOPT_DISABLE_NUMBA``. Asking for ``"numba"`` while
    numba is disabled runs the loop kernel uncompiled.
    """
    if backend is None:
        backend = "numba" if USE_NUMBA else "numpy"
    fn = _evaluate_jit if backend == "numba" else _evaluate_numpy
    return fn(
        np.ascontiguousarray(pts, dtype=np.float64),
        np.ascontiguousarray(centers, dtype=np.int64),
        np.ascontiguousarray(nbrs, dtype=np.int64),
        np.ascontiguousarray(weight, dtype=np.float64),
        float(c),
        float(eps),
        float(delta),
        bool(want_grad),
    )
