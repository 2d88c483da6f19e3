"""Special functions and assembly of the dense symmetric forms.

The nonlocal stiffness matrix holds

    A_ij = C_{N,s}/2 * iint_{R^4 \ (R^2\Omega)^2}
           (phi_i(x)-phi_i(y)) (phi_j(x)-phi_j(y)) / |x-y|^(2+2s) dx dy

for continuous piecewise linear hats on the mesh of the computational box,
vanishing outside it.  Element pairs are classified as identical, edge
adjacent, vertex adjacent or disjoint; the touching classes use regularizing
coordinate transforms with the radial direction integrated analytically, the
disjoint class a tensor Gauss rule, and the tail beyond the box a semi
analytic complement weight.  Pairs with both elements exterior are excluded.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .errors import ParameterError
from .mesh import OMEGA, TriMesh

__all__ = [
    "gamma_fn", "c_ns", "quadrature_rule", "FracParams", "AssembledForms",
    "assemble_stiffness", "assemble_mass_interior", "assemble_mass_kappa",
    "assemble_mass_control", "assemble_load_exterior", "assemble_forms",
    "export_matrix_csv",
]


def gamma_fn(x: float) -> float:
    """Euler Gamma function for positive arguments."""
    if not x > 0:
        raise ParameterError(f"gamma_fn requires x > 0, got {x}")
    return math.gamma(x)


def c_ns(dim: int, s: float) -> float:
    """Kernel normalization  s 2^(2s) Gamma((2s+dim)/2) / (pi^(dim/2) Gamma(1-s))."""
    if dim not in (1, 2):
        raise ParameterError(f"dim must be 1 or 2, got {dim}")
    if not 0.0 < s < 1.0:
        raise ParameterError(f"s must lie in (0, 1), got {s}")
    return (s * 2.0 ** (2 * s) * gamma_fn((2 * s + dim) / 2.0)
            / (math.pi ** (dim / 2.0) * gamma_fn(1.0 - s)))


# --------------------------------------------------------------------------
# reference-triangle quadrature (points as barycentric rows, weights sum 1/2)
# --------------------------------------------------------------------------

def _bary(table):
    pts = np.asarray([row[:2] for row in table])
    w = np.asarray([row[2] for row in table])
    lam = np.column_stack([1.0 - pts[:, 0] - pts[:, 1], pts[:, 0], pts[:, 1]])
    return lam, w / 2.0

_RULES = {
    # degree 2, 3 points
    2: _bary([(1 / 6, 1 / 6, 1 / 3), (2 / 3, 1 / 6, 1 / 3), (1 / 6, 2 / 3, 1 / 3)]),
    # degree 4, 6 points (Dunavant)
    4: _bary([
        (0.445948490915965, 0.445948490915965, 0.223381589678011),
        (0.445948490915965, 0.108103018168070, 0.223381589678011),
        (0.108103018168070, 0.445948490915965, 0.223381589678011),
        (0.091576213509771, 0.091576213509771, 0.109951743655322),
        (0.091576213509771, 0.816847572980459, 0.109951743655322),
        (0.816847572980459, 0.091576213509771, 0.109951743655322),
    ]),
    # degree 6, 12 points (Dunavant)
    6: _bary([
        (0.249286745170910, 0.249286745170910, 0.116786275726379),
        (0.249286745170910, 0.501426509658179, 0.116786275726379),
        (0.501426509658179, 0.249286745170910, 0.116786275726379),
        (0.063089014491502, 0.063089014491502, 0.050844906370207),
        (0.063089014491502, 0.873821971016996, 0.050844906370207),
        (0.873821971016996, 0.063089014491502, 0.050844906370207),
        (0.310352451033785, 0.636502499121399, 0.082851075618374),
        (0.636502499121399, 0.053145049844816, 0.082851075618374),
        (0.053145049844816, 0.310352451033785, 0.082851075618374),
        (0.636502499121399, 0.310352451033785, 0.082851075618374),
        (0.310352451033785, 0.053145049844816, 0.082851075618374),
        (0.053145049844816, 0.636502499121399, 0.082851075618374),
    ]),
}


def quadrature_rule(order: int):
    """Barycentric points and weights on the reference triangle.

    The rule of a given order integrates polynomials up to that degree
    exactly; weights sum to the reference area 1/2.
    """
    if order not in _RULES:
        raise ParameterError(f"quadrature order must be one of {sorted(_RULES)}, "
                             f"got {order}")
    lam, w = _RULES[order]
    return lam.copy(), w.copy()


# --------------------------------------------------------------------------
# parameters and assembled forms
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FracParams:
    """Physical and penalty parameters of the regularized exterior problem."""

    s: float
    dim: int = 2
    n_penalty: float = 1.0
    xi: float = 0.0
    kappa_value: float = 1.0
    c_ns: float = field(init=False)

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise ParameterError(f"s must lie in (0, 1), got {self.s}")
        if self.dim not in (1, 2):
            raise ParameterError(f"dim must be 1 or 2, got {self.dim}")
        if self.n_penalty < 1.0:
            raise ParameterError(f"n_penalty must be >= 1, got {self.n_penalty}")
        if self.xi < 0.0:
            raise ParameterError(f"xi must be >= 0, got {self.xi}")
        if self.kappa_value <= 0.0:
            raise ParameterError(f"kappa_value must be > 0, got {self.kappa_value}")
        object.__setattr__(self, "c_ns", c_ns(self.dim, self.s))

    def with_penalty(self, n: float) -> "FracParams":
        return replace(self, n_penalty=n)


@dataclass(frozen=True)
class AssembledForms:
    """Dense symmetric matrices of the bilinear form and the mass terms."""

    A: np.ndarray
    M_omega: np.ndarray
    M_kappa: np.ndarray
    ndof: int


# --------------------------------------------------------------------------
# singular-rule tables
# --------------------------------------------------------------------------

def _gl01(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _identical_table(s, n_gl):
    """Sector Gauss nodes with the closed-form radial factor baked in.

    Per angle, the reference difference-domain integral reduces to
    w(theta)^(2s-2) * B(2-2s, 3)/2 with w the hexagon gauge; breakpoints at
    the sector normals keep the integrand analytic per sector.
    """
    brk = np.array([0.0, 0.5, 0.75, 1.0, 1.5, 1.75, 2.0]) * np.pi
    gx, gw = np.polynomial.legendre.leggauss(n_gl)
    th, wt = [], []
    for t0, t1 in zip(brk[:-1], brk[1:]):
        th.append(0.5 * (t0 + t1) + 0.5 * (t1 - t0) * gx)
        wt.append(0.5 * (t1 - t0) * gw)
    th = np.concatenate(th)
    wt = np.concatenate(wt)
    c, sn = np.cos(th), np.sin(th)
    gauge = np.maximum(c, 0.0) + np.maximum(sn, 0.0) + np.maximum(-c - sn, 0.0)
    radial = 0.5 * (1.0 / (2 - 2 * s) - 2.0 / (3 - 2 * s) + 1.0 / (4 - 2 * s))
    return c, sn, wt * gauge ** (2 * s - 2.0) * radial


def _edge_table(s, n_gl):
    """Four regularizing subdomains for the shared-edge pair.

    Directions live in (w, u2, v2) relative coordinates; the scale variable
    is integrated analytically, contributing 1/(3-2s) - 1/(4-2s).
    """
    gx, gw = _gl01(n_gl)
    X, Y = np.meshgrid(gx, gx, indexing="ij")
    W = np.outer(gw, gw).ravel()
    e1, e2 = X.ravel(), Y.ravel()
    one = np.ones_like(e1)
    doms = [
        (np.stack([e1, e2, 1 - e1], axis=1), one),
        (np.stack([e1 * e2, one, e1 * (1 - e2)], axis=1), e1),
        (np.stack([-e1 * e2, e1 * (1 - e2), one], axis=1), e1),
        (np.stack([e1 - 1, e1, e2], axis=1), one),
    ]
    dirs = np.vstack([d for d, _ in doms])
    wts = np.concatenate([W * j for _, j in doms])
    beta = 1.0 / (3 - 2 * s) - 1.0 / (4 - 2 * s)
    return np.ascontiguousarray(dirs), wts * beta


def _vertex_table(s, n_gl):
    """Two regularizing subdomains for the shared-vertex pair."""
    gx, gw = _gl01(n_gl)
    P = np.stack(np.meshgrid(gx, gx, gx, indexing="ij"), axis=-1).reshape(-1, 3)
    W = np.einsum("i,j,k->ijk", gw, gw, gw).ravel()
    h1, h2, h3 = P[:, 0], P[:, 1], P[:, 2]
    one = np.ones_like(h1)
    a1 = np.stack([one, h1], axis=1)
    b1 = np.stack([h2, h2 * h3], axis=1)
    va = np.vstack([a1, b1])
    vb = np.vstack([b1, a1])
    wts = np.concatenate([W * h2, W * h2]) / (4.0 - 2 * s)
    return np.ascontiguousarray(va), np.ascontiguousarray(vb), wts


# --------------------------------------------------------------------------
# assembly
# --------------------------------------------------------------------------

def assemble_stiffness(mesh: TriMesh, params: FracParams, quad_order: int = 4,
                       singular_order: int = 10, near_ratio: float = 2.5,
                       tail: bool = True) -> np.ndarray:
    """Assemble the dense nonlocal stiffness matrix.

    quad_order picks the disjoint-pair tensor rule (2, 4 or 6); pairs closer
    than near_ratio (centroid distance over max diameter) are escalated one
    rule level.  singular_order sets the Gauss order of the regularized
    touching-pair rules.
    """
    if quad_order not in _RULES:
        raise ParameterError(f"quadrature order must be one of {sorted(_RULES)}, "
                             f"got {quad_order}")
    if singular_order < 2:
        raise ParameterError("singular_order must be >= 2")
    s = params.s
    expo = -(1.0 + s)
    lam_base, w_base = quadrature_rule(quad_order)
    lam_fine, w_fine = quadrature_rule(min(6, quad_order + 2))
    id_c, id_s, id_w = _identical_table(s, max(16, singular_order + 6))
    id_cf, id_sf, id_wf = _identical_table(s, 3 * max(16, singular_order + 6))
    ed_dirs, ed_w = _edge_table(s, singular_order)
    ed_dirs_f, ed_w_f = _edge_table(s, singular_order + 6)
    vx_a, vx_b, vx_w = _vertex_table(s, singular_order)
    vx_a_f, vx_b_f, vx_w_f = _vertex_table(s, singular_order + 6)

    nv = mesh.num_vertices
    A = np.zeros((nv, nv))
    is_omega = np.ascontiguousarray(mesh.elem_region == OMEGA)
    _kernels.assemble_pairs(mesh.vertices, mesh.triangles, is_omega, expo,
                            id_c, id_s, id_w, id_cf, id_sf, id_wf,
                            ed_dirs, ed_w, ed_dirs_f, ed_w_f,
                            vx_a, vx_b, vx_w, vx_a_f, vx_b_f, vx_w_f,
                            lam_base, w_base, lam_fine, w_fine,
                            float(near_ratio) ** 2, 16.0, A)
    if tail:
        bnd = mesh.boundary_edges()
        lam_q, w_q = quadrature_rule(6)
        glx, glw = np.polynomial.legendre.leggauss(16)
        _kernels.tail_matrix(mesh.vertices, mesh.triangles, is_omega, s,
                             np.ascontiguousarray(bnd[:, 0]),
                             np.ascontiguousarray(bnd[:, 1]),
                             lam_q, w_q, glx, glw, A)
    A *= params.c_ns
    return A


def _mass_over(mesh: TriMesh, elem_mask, scale: float = 1.0) -> np.ndarray:
    """Exact P1 mass matrix summed over the masked elements."""
    nv = mesh.num_vertices
    M = np.zeros((nv, nv))
    tris = mesh.triangles[elem_mask]
    if len(tris) == 0:
        return M
    areas = mesh.signed_areas()[elem_mask]
    for a in range(3):
        for b in range(3):
            w = areas / (6.0 if a == b else 12.0)
            np.add.at(M, (tris[:, a], tris[:, b]), scale * w)
    return M


def assemble_mass_interior(mesh: TriMesh) -> np.ndarray:
    """Interior mass matrix; rows and columns vanish off the OMEGA star."""
    return _mass_over(mesh, mesh.elem_region == OMEGA)


def assemble_mass_kappa(mesh: TriMesh, params: FracParams) -> np.ndarray:
    """kappa-weighted exterior mass over the kappa-masked elements."""
    return _mass_over(mesh, mesh.kappa_mask, params.kappa_value)


def assemble_mass_control(mesh: TriMesh) -> np.ndarray:
    """Unit-weight mass over the control-support elements."""
    return _mass_over(mesh, mesh.control_mask)


def assemble_load_exterior(mesh: TriMesh, params: FracParams, z_nodal) -> np.ndarray:
    """Load vector  b_i = n int kappa z_h phi_i dx  with z_h zero-extended."""
    z = np.asarray(z_nodal, dtype=float)
    if z.shape != (mesh.num_vertices,):
        raise ParameterError(
            f"z_nodal must have one value per vertex ({mesh.num_vertices}), "
            f"got shape {z.shape}")
    if not np.isfinite(z).all():
        raise ParameterError("z_nodal must be finite")
    return params.n_penalty * (assemble_mass_kappa(mesh, params) @ z)


def assemble_forms(mesh: TriMesh, params: FracParams, quad_order: int = 4,
                   **kwargs) -> AssembledForms:
    """Assemble stiffness plus both mass matrices in one call."""
    A = assemble_stiffness(mesh, params, quad_order=quad_order, **kwargs)
    return AssembledForms(A=A,
                          M_omega=assemble_mass_interior(mesh),
                          M_kappa=assemble_mass_kappa(mesh, params),
                          ndof=mesh.num_vertices)


def export_matrix_csv(M, path, threshold: float = 1e-15) -> None:
    """Row-major "i,j,value" dump of entries above the threshold (debugging)."""
    M = np.asarray(M)
    with open(path, "w") as f:
        f.write("i,j,value\n")
        for i in range(M.shape[0]):
            for j in range(M.shape[1]):
                v = M[i, j]
                if abs(v) > threshold:
                    f.write(f"{i},{j},{v:.17g}\n")
