"""Validation studies: closed-form solution, space-time errors, rate fits.

The benchmark problem on the disk geometry has the separable solution

    u(x, t) = 2^(-2s) e^t / Gamma(1+s)^2 * (1 - |x|^2)_+^s,

which satisfies  du/dt + (-Lap)^s u = u + e^t  inside the unit disk, so the
manufactured interior source is  u + e^t  and the exterior datum is u itself.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ParameterError
from .evolve import TimeGrid, Trajectory, make_factor, solve_forward, system_matrix
from .fracform import FracParams, assemble_forms, assemble_mass_interior, gamma_fn
from .mesh import TriMesh

__all__ = ["ExactSolution", "RateResult", "l2qt_error", "manufactured_data",
           "robin_dirichlet_rate", "spatial_rate", "fit_slope", "write_rate_csv"]


@dataclass(frozen=True)
class ExactSolution:
    """Separable closed-form solution supported on the unit disk."""

    s: float

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise ParameterError(f"s must lie in (0, 1), got {self.s}")

    @property
    def amplitude(self) -> float:
        return 2.0 ** (-2 * self.s) / gamma_fn(1.0 + self.s) ** 2

    def eval(self, points, t: float) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        r2 = np.sum(pts * pts, axis=1)
        vals = self.amplitude * math.exp(t) * np.maximum(1.0 - r2, 0.0) ** self.s
        return vals

    def source(self, points, t: float) -> np.ndarray:
        """Manufactured interior load  u + e^t  (valid inside the unit disk)."""
        return self.eval(points, t) + math.exp(t)


def l2qt_error(traj: Trajectory, exact: ExactSolution, mesh: TriMesh,
               grid: TimeGrid) -> float:
    """L2(0,T; L2(Omega)) distance to the nodal interpolant of the exact field."""
    M = assemble_mass_interior(mesh)
    tau = grid.tau
    acc = 0.0
    for k in range(1, grid.K + 1):
        d = traj.frames[k] - exact.eval(mesh.vertices, tau * k)
        acc += tau * float(d @ (M @ d))
    return math.sqrt(max(acc, 0.0))


def manufactured_data(mesh: TriMesh, exact: ExactSolution, grid: TimeGrid):
    """Nodal (z, f, u0) data of the benchmark problem at the step times."""
    K = grid.K
    tau = grid.tau
    nv = mesh.num_vertices
    z = np.empty((K, nv))
    f = np.empty((K, nv))
    for k in range(1, K + 1):
        z[k - 1] = exact.eval(mesh.vertices, tau * k)
        f[k - 1] = exact.source(mesh.vertices, tau * k)
    u0 = exact.eval(mesh.vertices, 0.0)
    return z, f, u0


@dataclass(frozen=True)
class RateResult:
    """Log-log fit of errors against an increasing abscissa sequence."""

    abscissae: np.ndarray
    errors: np.ndarray
    slope: float
    local_slopes: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.abscissae, dtype=float)
        e = np.asarray(self.errors, dtype=float)
        if not (np.diff(a) > 0).all():
            raise ParameterError("abscissae must be strictly increasing")
        if not (e > 0).all():
            raise ParameterError("errors must be positive")
        object.__setattr__(self, "abscissae", a)
        object.__setattr__(self, "errors", e)
        object.__setattr__(self, "local_slopes", np.asarray(self.local_slopes))


def fit_slope(abscissae, errors) -> tuple[float, np.ndarray]:
    """Least-squares slope on (log a, log e) plus per-pair local slopes."""
    la = np.log(np.asarray(abscissae, dtype=float))
    le = np.log(np.asarray(errors, dtype=float))
    slope = float(np.polyfit(la, le, 1)[0])
    local = np.diff(le) / np.diff(la)
    return slope, local


def make_rate_result(abscissae, errors) -> RateResult:
    order = np.argsort(np.asarray(abscissae, dtype=float))
    a = np.asarray(abscissae, dtype=float)[order]
    e = np.asarray(errors, dtype=float)[order]
    slope, local = fit_slope(a, e)
    return RateResult(a, e, slope, local)


def robin_dirichlet_rate(mesh: TriMesh, grid: TimeGrid, s: float, n_list,
                         quad_order: int = 4, forms=None) -> RateResult:
    """Error of the penalized problem against the exact solution, per n.

    The stiffness and mass matrices are assembled once; only the penalty
    scaling changes across the n sweep.
    """
    n_list = [float(n) for n in n_list]
    if len(n_list) < 2 or not all(b > a for a, b in zip(n_list, n_list[1:])):
        raise ParameterError("n_list must be increasing with at least 2 entries")
    exact = ExactSolution(s)
    params = FracParams(s=s)
    if forms is None:
        forms = assemble_forms(mesh, params, quad_order=quad_order)
    z, f, u0 = manufactured_data(mesh, exact, grid)
    errors = []
    for n in n_list:
        pn = params.with_penalty(n)
        traj = solve_forward(forms, pn, grid, z_frames=z, f_frames=f, u0=u0,
                             factor=make_factor(forms, pn, grid, mesh))
        errors.append(l2qt_error(traj, exact, mesh, grid))
    return make_rate_result(n_list, errors)


def spatial_rate(mesh_sequence, grid: TimeGrid, s: float, n_fixed: float,
                 quad_order: int = 4) -> RateResult:
    """Error against the exact solution across nested meshes at fixed n."""
    if len(mesh_sequence) < 2:
        raise ParameterError("need at least two meshes")
    exact = ExactSolution(s)
    params = FracParams(s=s, n_penalty=n_fixed)
    dofs, errors = [], []
    for mesh in mesh_sequence:
        forms = assemble_forms(mesh, params, quad_order=quad_order)
        z, f, u0 = manufactured_data(mesh, exact, grid)
        traj = solve_forward(forms, params, grid, z_frames=z, f_frames=f, u0=u0,
                             factor=make_factor(forms, params, grid, mesh))
        dofs.append(mesh.num_vertices)
        errors.append(l2qt_error(traj, exact, mesh, grid))
    return make_rate_result(dofs, errors)


def write_rate_csv(result: RateResult, path) -> None:
    """Rows "abscissa,error,local_slope" plus a fitted-slope summary line."""
    with open(path, "w") as f:
        f.write("abscissa,error,local_slope\n")
        for i, (a, e) in enumerate(zip(result.abscissae, result.errors)):
            local = "" if i == 0 else f"{result.local_slopes[i - 1]:.17g}"
            f.write(f"{a:.17g},{e:.17g},{local}\n")
        f.write(f"fitted_slope={result.slope:.17g}\n")
