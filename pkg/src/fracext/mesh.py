"""Conforming triangulations of a computational box with region tags.

The mesh covers a disk ``omega_tilde`` that contains the interior domain
``omega`` (a disk or an axis-aligned square) plus the exterior collar where
the Robin weight kappa and, optionally, the control support live.  Region
boundaries are unions of element edges by construction, so the per-element
masks are exact on the polygonal approximation.

Meshes are immutable after construction and safe to share across threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, MeshParseError, MeshValidationError, ParameterError

OMEGA = 0
EXTERIOR = 1

_REGION_NAMES = {OMEGA: "OMEGA", EXTERIOR: "EXTERIOR"}


@dataclass(frozen=True)
class Disk:
    radius: float
    center: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class Square:
    """Axis-aligned square given by half-width, centered at ``center``."""
    half_width: float
    center: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class SquareAnnulus:
    """Region between two concentric axis-aligned squares (control support)."""
    inner_half: float
    outer_half: float
    center: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class GeometrySpec:
    """Geometry of the computational box and its tagged subregions."""

    omega: Disk | Square
    omega_tilde: Disk
    control_support: SquareAnnulus | None = None
    target_h: float = 0.1

    def __post_init__(self):
        if self.target_h <= 0:
            raise ParameterError(f"target_h must be > 0, got {self.target_h}")
        if self.omega_tilde.center != (0.0, 0.0):
            raise GeometryError("omega_tilde must be centered at the origin")
        R = self.omega_tilde.radius
        if isinstance(self.omega, Disk):
            if self.omega.center != (0.0, 0.0):
                raise GeometryError("omega disk must be concentric with omega_tilde")
            if not 0 < self.omega.radius < R:
                raise GeometryError(
                    f"omega radius {self.omega.radius} must lie strictly inside "
                    f"omega_tilde radius {R}")
        elif isinstance(self.omega, Square):
            if self.omega.center != (0.0, 0.0):
                raise GeometryError("omega square must be concentric with omega_tilde")
            if not 0 < self.omega.half_width * math.sqrt(2.0) < R:
                raise GeometryError("omega square must lie strictly inside omega_tilde")
        else:
            raise GeometryError(f"unsupported omega shape {type(self.omega).__name__}")
        cs = self.control_support
        if cs is not None:
            if not isinstance(self.omega, Square):
                raise GeometryError(
                    "control_support requires a square omega (template restriction)")
            if cs.center != (0.0, 0.0):
                raise GeometryError("control_support must be concentric with omega")
            if not self.omega.half_width < cs.inner_half < cs.outer_half:
                raise GeometryError(
                    "control_support must satisfy omega < inner_half < outer_half")
            if cs.outer_half * math.sqrt(2.0) >= R:
                raise GeometryError("control_support must lie strictly inside omega_tilde")


class TriMesh:
    """Immutable conforming triangulation with region tags.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counterclockwise vertex triples
    elem_region : (nt,) int array, OMEGA or EXTERIOR
    kappa_mask : (nt,) bool, element inside supp(kappa); implies EXTERIOR
    control_mask : (nt,) bool, element inside the control support; implies EXTERIOR
    omega_nodes / kappa_nodes / control_nodes : derived per-node masks
    """

    def __init__(self, vertices, triangles, elem_region, kappa_mask, control_mask,
                 validate=True):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        self.elem_region = np.ascontiguousarray(elem_region, dtype=np.int64)
        self.kappa_mask = np.ascontiguousarray(kappa_mask, dtype=bool)
        self.control_mask = np.ascontiguousarray(control_mask, dtype=bool)
        if validate:
            self._validate()
        self.omega_nodes = self._touching(self.elem_region == OMEGA)
        self.kappa_nodes = self._touching(self.kappa_mask)
        self.control_nodes = self._touching(self.control_mask)
        for arr in (self.vertices, self.triangles, self.elem_region,
                    self.kappa_mask, self.control_mask, self.omega_nodes,
                    self.kappa_nodes, self.control_nodes):
            arr.setflags(write=False)

    # -- basic queries ------------------------------------------------------
    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def num_triangles(self):
        return self.triangles.shape[0]

    def signed_areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def omega_area(self):
        return float(self.signed_areas()[self.elem_region == OMEGA].sum())

    def _touching(self, elem_mask):
        out = np.zeros(self.num_vertices, dtype=bool)
        out[self.triangles[elem_mask].ravel()] = True
        return out

    def boundary_edges(self):
        """Directed boundary edges (a, b), counterclockwise around the mesh."""
        edges = {}
        for tri in self.triangles:
            for k in range(3):
                a, b = int(tri[k]), int(tri[(k + 1) % 3])
                if (b, a) in edges:
                    del edges[(b, a)]
                else:
                    edges[(a, b)] = None
        return np.array(sorted(edges.keys()), dtype=np.int64)

    # -- validation ---------------------------------------------------------
    def _validate(self):
        nv = self.num_vertices
        nt = self.num_triangles
        if self.triangles.min(initial=0) < 0 or self.triangles.max(initial=-1) >= nv:
            raise MeshValidationError("triangle references a vertex index out of range")
        if not np.isfinite(self.vertices).all():
            raise MeshValidationError("non-finite vertex coordinates")
        for name, arr in (("elem_region", self.elem_region),
                          ("kappa_mask", self.kappa_mask),
                          ("control_mask", self.control_mask)):
            if arr.shape != (nt,):
                raise MeshValidationError(f"{name} has wrong length")
        if not np.isin(self.elem_region, (OMEGA, EXTERIOR)).all():
            raise MeshValidationError("elem_region must be OMEGA (0) or EXTERIOR (1)")
        if (self.kappa_mask & (self.elem_region == OMEGA)).any():
            raise MeshValidationError("kappa_mask set on an OMEGA element")
        if (self.control_mask & (self.elem_region == OMEGA)).any():
            raise MeshValidationError("control_mask set on an OMEGA element")
        areas = self.signed_areas()
        if (areas <= 0).any():
            bad = int(np.argmax(areas <= 0))
            raise MeshValidationError(
                f"element {bad} has non-positive signed area {areas[bad]:g}")
        # duplicate vertices would silently break conformity checks
        _, counts = np.unique(self.vertices, axis=0, return_counts=True)
        if (counts > 1).any():
            raise MeshValidationError("duplicate vertex coordinates")
        # conformity: every undirected edge in at most two triangles
        tri = self.triangles
        e = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
        e.sort(axis=1)
        _, inv, counts = np.unique(e, axis=0, return_inverse=True, return_counts=True)
        if (counts > 2).any():
            raise MeshValidationError("an edge is shared by more than two triangles")
        # hanging nodes: a vertex strictly inside a once-counted (boundary-like) edge
        single = np.flatnonzero(counts == 1)
        if len(single):
            uniq = np.unique(e, axis=0)
            pa = self.vertices[uniq[single, 0]]
            pb = self.vertices[uniq[single, 1]]
            scale = max(1.0, float(np.abs(self.vertices).max()))
            for a, b, ia, ib in zip(pa, pb, uniq[single, 0], uniq[single, 1]):
                d = b - a
                L2 = d @ d
                t = ((self.vertices - a) @ d) / L2
                off = self.vertices - a - np.outer(t, d)
                on_seg = (np.abs(off).max(axis=1) < 1e-12 * scale) \
                    & (t > 1e-10) & (t < 1 - 1e-10)
                on_seg[[ia, ib]] = False
                if on_seg.any():
                    raise MeshValidationError(
                        f"hanging node {int(np.flatnonzero(on_seg)[0])} on edge "
                        f"({int(ia)}, {int(ib)})")


# --------------------------------------------------------------------------
# generation
# --------------------------------------------------------------------------

def _ring_counts(span, h):
    return max(1, int(round(span / h)))


def generate_mesh(spec: GeometrySpec) -> TriMesh:
    """Build the structured ring template for the given geometry.

    Nodes sit on concentric rings sharing one set of angles; each ring is a
    circle, a scaled square, or a square-to-circle blend, so the omega,
    kappa-support and control-support boundaries are exact unions of edges.
    """
    h = spec.target_h
    R = spec.omega_tilde.radius
    M = int(math.ceil(2 * math.pi * R / h))
    M = max(16, ((M + 7) // 8) * 8)
    theta = 2 * math.pi * np.arange(M) / M
    ct, st = np.cos(theta), np.sin(theta)

    # ring radius profiles rho(theta) and per-strip tags, inner to outer
    rings = []           # each: (nt,) radius per angle
    strip_tag = []       # per strip: (region, kappa, control); strip 0 = center fan

    def circle(r):
        return np.full(M, r)

    def square(a):
        return a / np.maximum(np.abs(ct), np.abs(st))

    if isinstance(spec.omega, Disk):
        r0 = spec.omega.radius
        n_in = _ring_counts(r0, h)
        n_ex = max(2, _ring_counts(R - r0, h))
        for i in range(1, n_in + 1):
            rings.append(circle(r0 * i / n_in))
            strip_tag.append((OMEGA, False, False))
        # mild power grading keeps exterior rings generically placed (no ring
        # of the family, nor of its dyadic refinements, aligns with interior
        # feature circles) and refines toward the interface
        for i in range(1, n_ex + 1):
            rings.append(circle(r0 + (R - r0) * (i / n_ex) ** 1.2))
            strip_tag.append((EXTERIOR, True, False))
    else:
        a = spec.omega.half_width
        n_in = _ring_counts(a, h)
        for i in range(1, n_in + 1):
            rings.append(square(a * i / n_in))
            strip_tag.append((OMEGA, False, False))
        cs = spec.control_support
        if cs is None:
            n_ex = max(2, _ring_counts(R - a, h))
            sq = square(a)
            for i in range(1, n_ex + 1):
                t = i / n_ex
                rings.append((1 - t) * sq + t * circle(R))
                strip_tag.append((EXTERIOR, True, False))
        else:
            for lo, hi, is_ctrl in ((a, cs.inner_half, False),
                                    (cs.inner_half, cs.outer_half, True)):
                n = _ring_counts(hi - lo, h)
                for i in range(1, n + 1):
                    rings.append(square(lo + (hi - lo) * i / n))
                    strip_tag.append((EXTERIOR, True, is_ctrl))
            n_ex = max(2, _ring_counts(R - cs.outer_half, h))
            sq = square(cs.outer_half)
            for i in range(1, n_ex + 1):
                t = i / n_ex
                rings.append((1 - t) * sq + t * circle(R))
                strip_tag.append((EXTERIOR, True, False))

    nr = len(rings)
    verts = np.empty((1 + nr * M, 2))
    verts[0] = 0.0
    for r, rho in enumerate(rings):
        verts[1 + r * M:1 + (r + 1) * M, 0] = rho * ct
        verts[1 + r * M:1 + (r + 1) * M, 1] = rho * st

    tris, region, kmask, cmask = [], [], [], []

    def emit(t, tag):
        tris.append(t)
        region.append(tag[0])
        kmask.append(tag[1])
        cmask.append(tag[2])

    idx0 = lambda j: 1 + (j % M)  # noqa: E731
    for j in range(M):
        emit((0, idx0(j), idx0(j + 1)), strip_tag[0])
    for r in range(1, nr):
        inner = 1 + (r - 1) * M
        outer = 1 + r * M
        tag = strip_tag[r]
        for j in range(M):
            a = inner + j
            b = outer + j
            c = outer + (j + 1) % M
            d = inner + (j + 1) % M
            if (r + j) % 2 == 0:
                emit((a, b, c), tag)
                emit((a, c, d), tag)
            else:
                emit((b, c, d), tag)
                emit((b, d, a), tag)

    return TriMesh(verts, np.array(tris), np.array(region),
                   np.array(kmask), np.array(cmask))


def refine_uniform(mesh: TriMesh) -> TriMesh:
    """Split each triangle into 4 by edge midpoints; tags are inherited."""
    nv = mesh.num_vertices
    edge_mid = {}
    new_pts = []

    def mid(a, b):
        key = (a, b) if a < b else (b, a)
        if key not in edge_mid:
            edge_mid[key] = nv + len(new_pts)
            new_pts.append(0.5 * (mesh.vertices[a] + mesh.vertices[b]))
        return edge_mid[key]

    tris, region, kmask, cmask = [], [], [], []
    for t, tri in enumerate(mesh.triangles):
        v0, v1, v2 = (int(v) for v in tri)
        m01, m12, m20 = mid(v0, v1), mid(v1, v2), mid(v2, v0)
        for child in ((v0, m01, m20), (m01, v1, m12), (m20, m12, v2), (m01, m12, m20)):
            tris.append(child)
            region.append(mesh.elem_region[t])
            kmask.append(mesh.kappa_mask[t])
            cmask.append(mesh.control_mask[t])
    verts = np.vstack([mesh.vertices, np.array(new_pts)])
    return TriMesh(verts, np.array(tris), np.array(region),
                   np.array(kmask), np.array(cmask))


def locate_region(mesh: TriMesh, point) -> str:
    """Region name of the element containing ``point``; "outside" if none.

    Points on shared edges resolve to the lowest element index.
    """
    x, y = float(point[0]), float(point[1])
    p = mesh.vertices[mesh.triangles]
    scale = max(1.0, float(np.abs(mesh.vertices).max()))
    tol = 1e-12 * scale * scale
    d0 = (p[:, 1, 0] - p[:, 0, 0]) * (y - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (x - p[:, 0, 0])
    d1 = (p[:, 2, 0] - p[:, 1, 0]) * (y - p[:, 1, 1]) - (p[:, 2, 1] - p[:, 1, 1]) * (x - p[:, 1, 0])
    d2 = (p[:, 0, 0] - p[:, 2, 0]) * (y - p[:, 2, 1]) - (p[:, 0, 1] - p[:, 2, 1]) * (x - p[:, 2, 0])
    inside = (d0 >= -tol) & (d1 >= -tol) & (d2 >= -tol)
    hits = np.flatnonzero(inside)
    if len(hits) == 0:
        return "outside"
    return _REGION_NAMES[int(mesh.elem_region[hits[0]])]


# --------------------------------------------------------------------------
# plain-text mesh file
# --------------------------------------------------------------------------

def save_mesh(mesh: TriMesh, path) -> None:
    """Write the plain-text format: header "nv nt", vertex and element lines."""
    with open(path, "w") as f:
        f.write("# fracext mesh: nv nt / x y / i j k region kappa control\n")
        f.write(f"{mesh.num_vertices} {mesh.num_triangles}\n")
        for x, y in mesh.vertices:
            f.write(f"{x:.17g} {y:.17g}\n")
        for t, tri in enumerate(mesh.triangles):
            f.write(f"{tri[0]} {tri[1]} {tri[2]} {mesh.elem_region[t]} "
                    f"{int(mesh.kappa_mask[t])} {int(mesh.control_mask[t])}\n")


def load_mesh(path) -> TriMesh:
    """Read a mesh file; raises MeshParseError (with line number) on bad input."""
    with open(path) as f:
        raw = f.readlines()
    lines = [(i + 1, ln.split("#", 1)[0].strip()) for i, ln in enumerate(raw)]
    lines = [(no, ln) for no, ln in lines if ln]
    if not lines:
        raise MeshParseError("line 1: empty mesh file")

    def parse(no, ln, n, conv, what):
        parts = ln.split()
        if len(parts) != n:
            raise MeshParseError(f"line {no}: expected {n} fields for {what}, "
                                 f"got {len(parts)}")
        try:
            return [conv(p) for p in parts]
        except ValueError:
            raise MeshParseError(f"line {no}: could not parse {what} from {ln!r}") from None

    no, ln = lines[0]
    nv, nt = parse(no, ln, 2, int, "header")
    if nv < 3 or nt < 1:
        raise MeshParseError(f"line {no}: header must have nv >= 3, nt >= 1")
    if len(lines) != 1 + nv + nt:
        raise MeshParseError(
            f"line {lines[-1][0]}: expected {1 + nv + nt} data lines, got {len(lines)}")
    verts = np.array([parse(no, ln, 2, float, "vertex")
                      for no, ln in lines[1:1 + nv]])
    rows = [parse(no, ln, 6, int, "element") for no, ln in lines[1 + nv:]]
    tris = np.array([r[:3] for r in rows])
    region = np.array([r[3] for r in rows])
    kmask = np.array([r[4] for r in rows], dtype=bool)
    cmask = np.array([r[5] for r in rows], dtype=bool)
    bad = [(no, r) for (no, _), r in zip(lines[1 + nv:], rows)
           if min(r[:3]) < 0 or max(r[:3]) >= nv]
    if bad:
        no, r = bad[0]
        raise MeshParseError(f"line {no}: vertex index out of range in {r[:3]}")
    return TriMesh(verts, tris, region, kmask, cmask)


def meshes_equal(a: TriMesh, b: TriMesh) -> bool:
    """Field-by-field equality (used by the save/load round-trip contract)."""
    return (np.array_equal(a.vertices, b.vertices)
            and np.array_equal(a.triangles, b.triangles)
            and np.array_equal(a.elem_region, b.elem_region)
            and np.array_equal(a.kappa_mask, b.kappa_mask)
            and np.array_equal(a.control_mask, b.control_mask))
