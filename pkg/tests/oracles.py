"""Independent brute-force integrators used to check the assembly.

The pair-integral oracle evaluates the inner integral in polar coordinates
around each outer quadrature point with the radial part integrated
analytically, and the outer integral with tensor rules geometrically graded
toward the shared simplex.  It shares no decomposition with the production
scheme (which uses relative-coordinate subdomain transforms).
"""
import numpy as np

GL20 = np.polynomial.legendre.leggauss(20)
GL12 = np.polynomial.legendre.leggauss(12)


def union_nodes(tri, trip):
    """Union of the two vertex triples with local-to-union index maps."""
    nodes = [tuple(v) for v in tri]
    idxT = [0, 1, 2]
    idxP = []
    for v in trip:
        tv = tuple(v)
        found = None
        for i, w in enumerate(nodes):
            if abs(w[0] - tv[0]) < 1e-14 and abs(w[1] - tv[1]) < 1e-14:
                found = i
        if found is None:
            nodes.append(tv)
            found = len(nodes) - 1
        idxP.append(found)
    return np.array(nodes), idxT, idxP


def _affine_hats(tri):
    p0, p1, p2 = tri
    M = np.array([[1.0, p0[0], p0[1]], [1.0, p1[0], p1[1]], [1.0, p2[0], p2[1]]])
    C = np.linalg.inv(M)
    return C[0, :].copy(), C[1:, :].T.copy()


def inner_polar(x, trip, alph_u, beta_u, vals_u, s):
    """G[g,h](x) = int_T' (phi_g(x)-phi_g(y))(phi_h(x)-phi_h(y)) |x-y|^(-2-2s) dy."""
    n = len(vals_u)
    A = vals_u - alph_u - beta_u @ x
    angs = np.arctan2(trip[:, 1] - x[1], trip[:, 0] - x[0])
    al, be = _affine_hats(trip)
    lam = al + be @ x
    inside = lam.min() > 1e-12
    if inside:
        sa = np.sort(angs)
        segs = [(sa[0], sa[1]), (sa[1], sa[2]), (sa[2], sa[0] + 2 * np.pi)]
    else:
        c = np.mean(trip, axis=0) - x
        mid = np.arctan2(c[1], c[0])
        rel = (angs - mid + np.pi) % (2 * np.pi) - np.pi
        rs = np.sort(rel)
        segs = [(mid + rs[0], mid + rs[1]), (mid + rs[1], mid + rs[2])]
    th_all, w_all = [], []
    for t0, t1 in segs:
        if t1 - t0 < 1e-14:
            continue
        th_all.append(0.5 * (t0 + t1) + 0.5 * (t1 - t0) * GL20[0])
        w_all.append(0.5 * (t1 - t0) * GL20[1])
    th = np.concatenate(th_all)
    ww = np.concatenate(w_all)
    E = np.stack([np.cos(th), np.sin(th)], axis=1)
    rin = np.zeros(len(th))
    rout = np.full(len(th), np.inf)
    ok = np.ones(len(th), dtype=bool)
    tp = trip
    if _cross(tp[1] - tp[0], tp[2] - tp[0]) < 0:
        tp = tp[[0, 2, 1]]
    for k in range(3):
        a, b = tp[k], tp[(k + 1) % 3]
        nv = np.array([-(b[1] - a[1]), b[0] - a[0]])   # inward for ccw
        num = nv @ (a - x)
        den = E @ nv
        par = np.abs(den) < 1e-14
        ok &= ~(par & (num > 1e-13))
        with np.errstate(divide="ignore", invalid="ignore"):
            t = num / den
        pos = den > 0
        rin = np.where(~par & pos, np.maximum(rin, t), rin)
        rout = np.where(~par & ~pos, np.minimum(rout, t), rout)
    ok &= rout > rin + 1e-15
    if not np.any(ok):
        return np.zeros((n, n))
    th, ww, E, rin, rout = th[ok], ww[ok], E[ok], rin[ok], rout[ok]
    B = beta_u @ E.T
    scale = max(np.max(np.abs(trip)), 1.0)
    near = rin < 1e-11 * scale     # A vanishes analytically on the closure
    rin_s = np.where(near, 1.0, rin)

    def rint(p, lo):
        if abs(p + 1.0) < 1e-14:
            return np.log(rout) - np.log(np.where(lo == 0.0, 1.0, lo))
        q = p + 1.0
        loq = np.where((lo == 0.0) & (q > 0), 0.0, lo ** q)
        return (rout ** q - loq) / q

    Iaa = np.where(near, 0.0, rint(-1.0 - 2 * s, rin_s))
    Iab = np.where(near, 0.0, rint(-2.0 * s, rin_s))
    Ibb = rint(1.0 - 2 * s, rin)
    Aeff = np.where(near[None, :], 0.0, A[:, None])
    G = np.einsum("m,im,jm->ij", ww * Iaa, Aeff, Aeff)
    G -= np.einsum("m,im,jm->ij", ww * Iab, Aeff, B)
    G -= np.einsum("m,im,jm->ij", ww * Iab, B, Aeff)
    G += np.einsum("m,im,jm->ij", ww * Ibb, B, B)
    return G


def _graded_01(npanel=26, order=10, r=0.5):
    xs, ws = [], []
    gx, gw = np.polynomial.legendre.leggauss(order)
    hi = 1.0
    for _ in range(npanel):
        lo = hi * r
        xs.append(0.5 * (hi + lo) + 0.5 * (hi - lo) * gx)
        ws.append(0.5 * (hi - lo) * gw)
        hi = lo
    return np.concatenate(xs), np.concatenate(ws)


def _cross(a, b):
    return a[0] * b[1] - a[1] * b[0]


def pair_integral(tri, trip, s):
    """Union-node matrix of the pair double integral (independent scheme)."""
    tri = np.asarray(tri, float)
    trip = np.asarray(trip, float)
    nodes, idxT, idxP = union_nodes(tri, trip)
    shared = len(set(idxT) & set(idxP))
    if np.allclose(tri, trip):
        kind = "identical"
    elif shared == 2:
        kind = "edge"
    elif shared == 1:
        kind = "vertex"
    else:
        kind = "disjoint"
    n = len(nodes)
    aT, bT = _affine_hats(tri)
    aP, bP = _affine_hats(trip)
    alph_u = np.zeros(n)
    beta_u = np.zeros((n, 2))
    for loc, g in enumerate(idxP):
        alph_u[g] += aP[loc]
        beta_u[g] += bP[loc]

    def vals_at(x):
        v = np.zeros(n)
        lam = aT + bT @ x
        for loc, g in enumerate(idxT):
            v[g] += lam[loc]
        return v

    p0, p1, p2 = tri
    pts, wts = [], []
    zg, zw = GL12
    zg = 0.5 * (zg + 1)
    zw = 0.5 * zw
    if kind == "identical":
        cen = tri.mean(axis=0)
        tg, tw = _graded_01()
        for k in range(3):
            a, b = tri[k], tri[(k + 1) % 3]
            area2 = abs(_cross(b - a, cen - a))
            for t, wt in zip(tg, tw):
                for z, wz in zip(zg, zw):
                    pts.append((1 - t) * ((1 - z) * a + z * b) + t * cen)
                    wts.append(wt * wz * area2 * (1 - t))
    elif kind == "edge":
        # orient so the shared edge is the base of tri
        sh = [loc for loc, g in enumerate(idxT) if g in set(idxP[i] for i in range(3))]
        opp = ({0, 1, 2} - set(sh)).pop()
        a, b, c = tri[sh[0]], tri[sh[1]], tri[opp]
        area2 = abs(_cross(b - a, c - a))
        tg, tw = _graded_01(npanel=30)
        for t, wt in zip(tg, tw):
            for z, wz in zip(zg, zw):
                pts.append((1 - t) * ((1 - z) * a + z * b) + t * c)
                wts.append(wt * wz * area2 * (1 - t))
    elif kind == "vertex":
        sh = [loc for loc, g in enumerate(idxT)
              if g in set(idxP[i] for i in range(3))][0]
        a = tri[sh]
        b, c = tri[(sh + 1) % 3], tri[(sh + 2) % 3]
        area2 = abs(_cross(b - a, c - a))
        tg, tw = _graded_01(npanel=30)
        for t, wt in zip(tg, tw):
            for z, wz in zip(zg, zw):
                pts.append(a + t * ((1 - z) * (b - a) + z * (c - a)))
                wts.append(wt * wz * area2 * t)
    else:
        area2 = abs(_cross(p1 - p0, p2 - p0))
        for t, wt in zip(zg, zw):
            for z, wz in zip(zg, zw):
                pts.append(p0 + t * ((1 - z) * (p1 - p0) + z * (p2 - p0)))
                wts.append(wt * wz * area2 * t)

    G = np.zeros((n, n))
    for x, w in zip(pts, wts):
        G += w * inner_polar(x, trip, alph_u, beta_u, vals_at(x), s)
    return G, nodes, idxT, idxP


def _ray_poly_distance(x, theta, bnd_pts):
    """Distance from x to the convex boundary polygon along direction theta."""
    e = np.array([np.cos(theta), np.sin(theta)])
    best = np.inf
    nb = len(bnd_pts)
    for k in range(nb):
        a = bnd_pts[k]
        b = bnd_pts[(k + 1) % nb]
        d = b - a
        den = _cross(e, d)
        if abs(den) < 1e-15:
            continue
        t = _cross(a - x, d) / den
        u = _cross(a - x, e) / den
        if t > 0 and -1e-12 <= u <= 1 + 1e-12:
            best = min(best, t)
    return best


def tail_weight(x, bnd_pts, s):
    """omega(x)/C = (1/2s) int_0^2pi rho(x,theta)^(-2s) dtheta by ray casting."""
    angs = np.sort(np.arctan2(bnd_pts[:, 1] - x[1], bnd_pts[:, 0] - x[0]))
    angs = np.concatenate([angs, [angs[0] + 2 * np.pi]])
    gx, gw = GL20
    acc = 0.0
    for t0, t1 in zip(angs[:-1], angs[1:]):
        if t1 - t0 < 1e-14:
            continue
        th = 0.5 * (t0 + t1) + 0.5 * (t1 - t0) * gx
        ww = 0.5 * (t1 - t0) * gw
        for t, w in zip(th, ww):
            acc += w * _ray_poly_distance(x, t, bnd_pts) ** (-2.0 * s)
    return acc / (2.0 * s)


def _boundary_loop(mesh):
    edges = mesh.boundary_edges()
    nxt = {int(a): int(b) for a, b in edges}
    loop = [int(edges[0, 0])]
    while True:
        n = nxt[loop[-1]]
        if n == loop[0]:
            break
        loop.append(n)
    return mesh.vertices[loop]


def assemble_stiffness_oracle(mesh, s, c_factor):
    """Brute-force counterpart of the production stiffness matrix."""
    from itertools import combinations

    nv = mesh.num_vertices
    A = np.zeros((nv, nv))
    omega = mesh.elem_region == 0
    coords = mesh.vertices[mesh.triangles]

    def scatter(G, gl_union, tri_ids, trip_ids, idxT, idxP, fac):
        glob = {}
        for loc, g in enumerate(idxT):
            glob[g] = tri_ids[loc]
        for loc, g in enumerate(idxP):
            glob[g] = trip_ids[loc]
        gids = [glob[g] for g in range(len(gl_union))]
        for a, ia in enumerate(gids):
            for b, ib in enumerate(gids):
                A[ia, ib] += fac * G[a, b]

    for t in range(mesh.num_triangles):
        if not omega[t]:
            continue
        G, nodes, idxT, idxP = pair_integral(coords[t], coords[t], s)
        scatter(G, nodes, mesh.triangles[t], mesh.triangles[t], idxT, idxP, 0.5)
    for t1, t2 in combinations(range(mesh.num_triangles), 2):
        if not omega[t1] and not omega[t2]:
            continue
        G, nodes, idxT, idxP = pair_integral(coords[t1], coords[t2], s)
        scatter(G, nodes, mesh.triangles[t1], mesh.triangles[t2], idxT, idxP, 1.0)

    # tail over the complement of the boundary polygon, x restricted to Omega
    bnd = _boundary_loop(mesh)
    gx, gw = np.polynomial.legendre.leggauss(10)
    gx = 0.5 * (gx + 1)
    gw = 0.5 * gw
    for t in range(mesh.num_triangles):
        if not omega[t]:
            continue
        p0, p1, p2 = coords[t]
        area2 = abs(_cross(p1 - p0, p2 - p0))
        tri_ids = mesh.triangles[t]
        for tt, wt in zip(gx, gw):
            for z, wz in zip(gx, gw):
                lam1 = tt * (1 - z)
                lam2 = tt * z
                lam0 = 1 - lam1 - lam2
                x = lam0 * p0 + lam1 * p1 + lam2 * p2
                w = wt * wz * area2 * tt * tail_weight(x, bnd, s)
                lam = (lam0, lam1, lam2)
                for a in range(3):
                    for b in range(3):
                        A[tri_ids[a], tri_ids[b]] += w * lam[a] * lam[b]
    return c_factor * A
