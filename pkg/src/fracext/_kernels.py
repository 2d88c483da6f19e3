"""Compiled kernels for the nonlocal stiffness assembly.

The element-pair loop runs single threaded in a fixed order so assembled
matrices are bit-reproducible.  All quadrature tables are precomputed by the
caller; each pair class contributes a symmetric local matrix, so the global
matrix is symmetric to the last bit.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _scatter(A, nodes, local, nn, fac):
    for a in range(nn):
        ia = nodes[a]
        for b in range(nn):
            A[ia, nodes[b]] += fac * local[a, b]


@njit(cache=True)
def _pair_nodes(t1, t2, nodes):
    """Classify a pair by shared vertices and fill the union node list.

    Returns (kind, nn): kind 2=edge ([g0, g1, opp1, opp2]), 1=vertex
    ([g0, t1a, t1b, t2a, t2b]), 0=disjoint (all six vertices).
    """
    s0 = -1
    s1 = -1
    l1a = -1
    l1b = -1
    l2a = -1
    l2b = -1
    for a in range(3):
        for b in range(3):
            if t1[a] == t2[b]:
                if s0 < 0:
                    s0 = t1[a]
                    l1a = a
                    l2a = b
                else:
                    s1 = t1[a]
                    l1b = a
                    l2b = b
    if s1 >= 0:
        nodes[0] = s0
        nodes[1] = s1
        nodes[2] = t1[3 - l1a - l1b]
        nodes[3] = t2[3 - l2a - l2b]
        return 2, 4
    if s0 >= 0:
        nodes[0] = s0
        nodes[1] = t1[(l1a + 1) % 3]
        nodes[2] = t1[(l1a + 2) % 3]
        nodes[3] = t2[(l2a + 1) % 3]
        nodes[4] = t2[(l2a + 2) % 3]
        return 1, 5
    for a in range(3):
        nodes[a] = t1[a]
        nodes[3 + a] = t2[a]
    return 0, 6


@njit(cache=True)
def _local_identical(verts, tri, expo, id_cos, id_sin, id_w, local):
    v0x, v0y = verts[tri[0], 0], verts[tri[0], 1]
    b00 = verts[tri[1], 0] - v0x
    b10 = verts[tri[1], 1] - v0y
    b01 = verts[tri[2], 0] - v0x
    b11 = verts[tri[2], 1] - v0y
    det2 = (b00 * b11 - b10 * b01) ** 2
    for a in range(3):
        for b in range(3):
            local[a, b] = 0.0
    for q in range(id_cos.shape[0]):
        c = id_cos[q]
        s = id_sin[q]
        ex = b00 * c + b01 * s
        ey = b10 * c + b11 * s
        kern = (ex * ex + ey * ey) ** expo
        d0 = -c - s
        wk = id_w[q] * kern
        local[0, 0] += wk * d0 * d0
        local[0, 1] += wk * d0 * c
        local[0, 2] += wk * d0 * s
        local[1, 1] += wk * c * c
        local[1, 2] += wk * c * s
        local[2, 2] += wk * s * s
    for a in range(3):
        for b in range(a, 3):
            v = local[a, b] * det2
            local[a, b] = v
            local[b, a] = v


@njit(cache=True)
def _local_edge(verts, nodes, expo, ed_dirs, ed_w, local):
    g0, g1, t2, q2 = nodes[0], nodes[1], nodes[2], nodes[3]
    Ex = verts[g1, 0] - verts[g0, 0]
    Ey = verts[g1, 1] - verts[g0, 1]
    cx = verts[t2, 0] - verts[g1, 0]
    cy = verts[t2, 1] - verts[g1, 1]
    dx = verts[q2, 0] - verts[g1, 0]
    dy = verts[q2, 1] - verts[g1, 1]
    jac = abs(Ex * cy - Ey * cx) * abs(Ex * dy - Ey * dx)
    for a in range(4):
        for b in range(4):
            local[a, b] = 0.0
    for q in range(ed_dirs.shape[0]):
        w = ed_dirs[q, 0]
        u = ed_dirs[q, 1]
        v = ed_dirs[q, 2]
        vx = w * Ex + u * cx - v * dx
        vy = w * Ey + u * cy - v * dy
        kern = (vx * vx + vy * vy) ** expo
        d0 = -w
        d1 = w - u + v
        d2 = u
        d3 = -v
        wk = ed_w[q] * kern
        local[0, 0] += wk * d0 * d0
        local[0, 1] += wk * d0 * d1
        local[0, 2] += wk * d0 * d2
        local[0, 3] += wk * d0 * d3
        local[1, 1] += wk * d1 * d1
        local[1, 2] += wk * d1 * d2
        local[1, 3] += wk * d1 * d3
        local[2, 2] += wk * d2 * d2
        local[2, 3] += wk * d2 * d3
        local[3, 3] += wk * d3 * d3
    for a in range(4):
        for b in range(a, 4):
            v = local[a, b] * jac
            local[a, b] = v
            local[b, a] = v


@njit(cache=True)
def _local_vertex(verts, nodes, expo, vx_a, vx_b, vx_w, local):
    g0, t1, t2, q1, q2 = nodes[0], nodes[1], nodes[2], nodes[3], nodes[4]
    bt00 = verts[t1, 0] - verts[g0, 0]
    bt10 = verts[t1, 1] - verts[g0, 1]
    bt01 = verts[t2, 0] - verts[t1, 0]
    bt11 = verts[t2, 1] - verts[t1, 1]
    bs00 = verts[q1, 0] - verts[g0, 0]
    bs10 = verts[q1, 1] - verts[g0, 1]
    bs01 = verts[q2, 0] - verts[q1, 0]
    bs11 = verts[q2, 1] - verts[q1, 1]
    jac = abs(bt00 * bt11 - bt10 * bt01) * abs(bs00 * bs11 - bs10 * bs01)
    for a in range(5):
        for b in range(5):
            local[a, b] = 0.0
    for q in range(vx_a.shape[0]):
        a0 = vx_a[q, 0]
        a1 = vx_a[q, 1]
        b0 = vx_b[q, 0]
        b1 = vx_b[q, 1]
        px = bt00 * a0 + bt01 * a1 - bs00 * b0 - bs01 * b1
        py = bt10 * a0 + bt11 * a1 - bs10 * b0 - bs11 * b1
        kern = (px * px + py * py) ** expo
        d0 = b0 - a0
        d1 = a0 - a1
        d2 = a1
        d3 = b1 - b0
        d4 = -b1
        wk = vx_w[q] * kern
        local[0, 0] += wk * d0 * d0
        local[0, 1] += wk * d0 * d1
        local[0, 2] += wk * d0 * d2
        local[0, 3] += wk * d0 * d3
        local[0, 4] += wk * d0 * d4
        local[1, 1] += wk * d1 * d1
        local[1, 2] += wk * d1 * d2
        local[1, 3] += wk * d1 * d3
        local[1, 4] += wk * d1 * d4
        local[2, 2] += wk * d2 * d2
        local[2, 3] += wk * d2 * d3
        local[2, 4] += wk * d2 * d4
        local[3, 3] += wk * d3 * d3
        local[3, 4] += wk * d3 * d4
        local[4, 4] += wk * d4 * d4
    for a in range(5):
        for b in range(a, 5):
            v = local[a, b] * jac
            local[a, b] = v
            local[b, a] = v


@njit(cache=True)
def _local_disjoint(xq1, wq1, xq2, wq2, lam, expo, colsum, local):
    """Tensor rule on a separated pair; lam holds hat values per point."""
    n1 = xq1.shape[0]
    n2 = xq2.shape[0]
    for a in range(6):
        for b in range(6):
            local[a, b] = 0.0
    for r in range(n2):
        colsum[r] = 0.0
    for q in range(n1):
        rowsum = 0.0
        w1 = wq1[q]
        for r in range(n2):
            ddx = xq1[q, 0] - xq2[r, 0]
            ddy = xq1[q, 1] - xq2[r, 1]
            kern = (ddx * ddx + ddy * ddy) ** expo
            wkr = wq2[r] * kern
            rowsum += wkr
            colsum[r] += w1 * kern
            wcross = w1 * wkr
            for a in range(3):
                la = wcross * lam[q, a]
                for b in range(3):
                    local[a, 3 + b] -= la * lam[r, b]
        wrow = w1 * rowsum
        for a in range(3):
            la = wrow * lam[q, a]
            for b in range(a, 3):
                local[a, b] += la * lam[q, b]
    for r in range(n2):
        wcol = wq2[r] * colsum[r]
        for a in range(3):
            la = wcol * lam[r, a]
            for b in range(a, 3):
                local[3 + a, 3 + b] += la * lam[r, b]
    for a in range(3):
        for b in range(a):
            local[a, b] = local[b, a]
            local[3 + a, 3 + b] = local[3 + b, 3 + a]
    for a in range(3):
        for b in range(3):
            local[3 + a, b] = local[b, 3 + a]


@njit(cache=True)
def assemble_pairs(verts, tris, is_omega, expo,
                   id_cos, id_sin, id_w, id_cos_f, id_sin_f, id_w_f,
                   ed_dirs, ed_w, ed_dirs_f, ed_w_f,
                   vx_a, vx_b, vx_w, vx_a_f, vx_b_f, vx_w_f,
                   lam_base, w_base, lam_fine, w_fine, near_ratio2,
                   distort_ratio2, A):
    """Accumulate all element-pair contributions of the double integral.

    Unordered cross pairs enter with weight 1 and self pairs with 1/2; the
    caller multiplies the final matrix by C_{N,s} (the form carries C/2 and
    each unordered pair appears twice).  The ``*_f`` tables are finer rules
    used when a pair mixes disparate length scales (thin or nested elements),
    detected through diameter-over-altitude ratios.
    """
    nt = tris.shape[0]
    nqb = lam_base.shape[0]
    nqf = lam_fine.shape[0]
    ptsb = np.empty((nt, nqb, 2))
    ptsf = np.empty((nt, nqf, 2))
    wb = np.empty((nt, nqb))
    wf = np.empty((nt, nqf))
    cent = np.empty((nt, 2))
    diam2 = np.empty(nt)
    width2 = np.empty(nt)
    for t in range(nt):
        x0, y0 = verts[tris[t, 0], 0], verts[tris[t, 0], 1]
        x1, y1 = verts[tris[t, 1], 0], verts[tris[t, 1], 1]
        x2, y2 = verts[tris[t, 2], 0], verts[tris[t, 2], 1]
        area2 = abs((x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0))
        cent[t, 0] = (x0 + x1 + x2) / 3.0
        cent[t, 1] = (y0 + y1 + y2) / 3.0
        d01 = (x1 - x0) ** 2 + (y1 - y0) ** 2
        d12 = (x2 - x1) ** 2 + (y2 - y1) ** 2
        d20 = (x0 - x2) ** 2 + (y0 - y2) ** 2
        diam2[t] = max(d01, max(d12, d20))
        width2[t] = area2 * area2 / diam2[t]   # squared minimal altitude
        for q in range(nqb):
            ptsb[t, q, 0] = lam_base[q, 0] * x0 + lam_base[q, 1] * x1 + lam_base[q, 2] * x2
            ptsb[t, q, 1] = lam_base[q, 0] * y0 + lam_base[q, 1] * y1 + lam_base[q, 2] * y2
            wb[t, q] = w_base[q] * area2
        for q in range(nqf):
            ptsf[t, q, 0] = lam_fine[q, 0] * x0 + lam_fine[q, 1] * x1 + lam_fine[q, 2] * x2
            ptsf[t, q, 1] = lam_fine[q, 0] * y0 + lam_fine[q, 1] * y1 + lam_fine[q, 2] * y2
            wf[t, q] = w_fine[q] * area2

    local = np.empty((6, 6))
    nodes = np.empty(6, dtype=np.int64)
    colsum = np.empty(max(nqb, nqf))
    for t1 in range(nt):
        if is_omega[t1]:
            if diam2[t1] > distort_ratio2 * width2[t1]:
                _local_identical(verts, tris[t1], expo, id_cos_f, id_sin_f,
                                 id_w_f, local)
            else:
                _local_identical(verts, tris[t1], expo, id_cos, id_sin, id_w,
                                 local)
            _scatter(A, tris[t1], local, 3, 0.5)
        for t2 in range(t1 + 1, nt):
            if not is_omega[t1] and not is_omega[t2]:
                continue
            kind, nn = _pair_nodes(tris[t1], tris[t2], nodes)
            distorted = (max(diam2[t1], diam2[t2])
                         > distort_ratio2 * min(width2[t1], width2[t2]))
            if kind == 2:
                if distorted:
                    _local_edge(verts, nodes, expo, ed_dirs_f, ed_w_f, local)
                else:
                    _local_edge(verts, nodes, expo, ed_dirs, ed_w, local)
            elif kind == 1:
                if distorted:
                    _local_vertex(verts, nodes, expo, vx_a_f, vx_b_f, vx_w_f, local)
                else:
                    _local_vertex(verts, nodes, expo, vx_a, vx_b, vx_w, local)
            else:
                dx = cent[t1, 0] - cent[t2, 0]
                dy = cent[t1, 1] - cent[t2, 1]
                ratio2 = (dx * dx + dy * dy) / max(diam2[t1], diam2[t2])
                if ratio2 < near_ratio2:
                    _local_disjoint(ptsf[t1], wf[t1], ptsf[t2], wf[t2],
                                    lam_fine, expo, colsum, local)
                else:
                    _local_disjoint(ptsb[t1], wb[t1], ptsb[t2], wb[t2],
                                    lam_base, expo, colsum, local)
            _scatter(A, nodes, local, nn, 1.0)


@njit(cache=True)
def tail_matrix(verts, tris, is_omega, s,
                bnd_a, bnd_b, lam_q, w_q, gl_x, gl_w, A):
    """Accumulate int_Omega phi_i phi_j w(x) dx with the complement weight

        w(x) = (1/2s) * int_0^{2pi} rho(x, theta)^(-2s) dtheta,

    rho the distance from x to the (convex) mesh boundary polygon, computed
    per boundary edge through its subtended angular window.  The caller
    multiplies by C_{N,s}.
    """
    nq = lam_q.shape[0]
    nb = bnd_a.shape[0]
    ng = gl_x.shape[0]
    local = np.empty((3, 3))
    for t in range(tris.shape[0]):
        if not is_omega[t]:
            continue
        x0, y0 = verts[tris[t, 0], 0], verts[tris[t, 0], 1]
        x1, y1 = verts[tris[t, 1], 0], verts[tris[t, 1], 1]
        x2, y2 = verts[tris[t, 2], 0], verts[tris[t, 2], 1]
        area2 = abs((x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0))
        for a in range(3):
            for b in range(3):
                local[a, b] = 0.0
        for q in range(nq):
            px = lam_q[q, 0] * x0 + lam_q[q, 1] * x1 + lam_q[q, 2] * x2
            py = lam_q[q, 0] * y0 + lam_q[q, 1] * y1 + lam_q[q, 2] * y2
            om = 0.0
            for e in range(nb):
                ax, ay = verts[bnd_a[e], 0], verts[bnd_a[e], 1]
                bx, by = verts[bnd_b[e], 0], verts[bnd_b[e], 1]
                tx, ty = bx - ax, by - ay
                L = np.sqrt(tx * tx + ty * ty)
                tx /= L
                ty /= L
                proj = (px - ax) * tx + (py - ay) * ty
                fx = ax + proj * tx
                fy = ay + proj * ty
                d = np.sqrt((px - fx) ** 2 + (py - fy) ** 2)
                a0 = np.arctan2(-proj, d)
                a1 = np.arctan2(L - proj, d)
                half = 0.5 * (a1 - a0)
                mid = 0.5 * (a1 + a0)
                acc = 0.0
                for g in range(ng):
                    alpha = mid + half * gl_x[g]
                    acc += gl_w[g] * np.cos(alpha) ** (2.0 * s)
                om += d ** (-2.0 * s) * half * acc
            om /= 2.0 * s
            wq = w_q[q] * area2 * om
            for a in range(3):
                for b in range(3):
                    local[a, b] += wq * lam_q[q, a] * lam_q[q, b]
        _scatter(A, tris[t], local, 3, 1.0)
