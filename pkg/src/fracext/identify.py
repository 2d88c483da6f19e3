"""Exterior source identification by projected L-BFGS with Armijo search.

The unknown is a time-dependent nodal field on the control-support nodes,
constrained to be nonnegative.  Objective and gradient come from the fully
discrete state/adjoint pair, so the gradient is exact for the discrete
objective; misfit is measured in the interior mass norm and the Tikhonov
term uses the unit-weight mass on the control support (a kappa-weighted
variant is available behind ``mu_weighted``).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .evolve import CholeskyFactor, TimeGrid, Trajectory, make_factor, solve_adjoint, \
    solve_forward
from .fracform import AssembledForms, FracParams, assemble_mass_control
from .mesh import TriMesh

__all__ = ["ControlField", "PbfgsOptions", "PbfgsResult", "SourceIdentification",
           "project"]


@dataclass
class ControlField:
    """Control frames over the support nodes; zero elsewhere, k = 1..K."""

    support_nodes: np.ndarray
    frames: np.ndarray

    def __post_init__(self):
        self.support_nodes = np.asarray(self.support_nodes, dtype=np.int64)
        self.frames = np.asarray(self.frames, dtype=float)
        if self.frames.ndim != 2 or self.frames.shape[1] != len(self.support_nodes):
            raise ParameterError("frames must be (K, n_support)")
        if not np.isfinite(self.frames).all():
            raise ParameterError("control field contains non-finite values")

    @classmethod
    def zeros(cls, support_nodes, K):
        return cls(support_nodes, np.zeros((K, len(support_nodes))))

    @classmethod
    def constant(cls, support_nodes, K, value):
        return cls(support_nodes, np.full((K, len(support_nodes)), float(value)))

    def to_full(self, ndof: int) -> np.ndarray:
        full = np.zeros((self.frames.shape[0], ndof))
        full[:, self.support_nodes] = self.frames
        return full

    def copy_with(self, frames) -> "ControlField":
        return ControlField(self.support_nodes, frames)


def project(z: ControlField) -> ControlField:
    """Entrywise projection onto the nonnegative cone; idempotent."""
    return z.copy_with(np.maximum(z.frames, 0.0))


@dataclass(frozen=True)
class PbfgsOptions:
    memory: int = 10
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    grad_tol: float = 0.0          # 0 picks 1e-8 * (1 + |j(z0)|)
    max_iters: int = 200
    seed: int = 0
    max_backtracks: int = 50

    def __post_init__(self):
        if self.memory < 1:
            raise ParameterError("memory must be >= 1")
        if not 0.0 < self.armijo_c < 1.0:
            raise ParameterError("armijo_c must lie in (0, 1)")
        if not 0.0 < self.backtrack < 1.0:
            raise ParameterError("backtrack must lie in (0, 1)")
        if self.grad_tol < 0.0:
            raise ParameterError("grad_tol must be >= 0")
        if self.max_iters < 1:
            raise ParameterError("max_iters must be >= 1")


@dataclass
class PbfgsResult:
    z: ControlField
    history: list          # rows (iter, objective, proj_grad_norm, step_length)
    status: str            # "converged" | "max_iters" | "line_search_failed"
    iterations: int


class SourceIdentification:
    """Bundles mesh, forms and time grid for the identification problem."""

    def __init__(self, mesh: TriMesh, forms: AssembledForms, params: FracParams,
                 grid: TimeGrid, support_nodes=None, mu_weighted: bool = False):
        self.mesh = mesh
        self.forms = forms
        self.params = params
        self.grid = grid
        if support_nodes is None:
            support_nodes = np.flatnonzero(mesh.control_nodes)
        self.support_nodes = np.asarray(support_nodes, dtype=np.int64)
        if len(self.support_nodes) == 0:
            raise ParameterError("identification requires a nonempty control support")
        Mc = assemble_mass_control(mesh)
        if mu_weighted:
            Mc = Mc * params.kappa_value
        self.M_hat = Mc[np.ix_(self.support_nodes, self.support_nodes)]
        self.factor: CholeskyFactor = make_factor(forms, params, grid, mesh)
        # columns of n*M_kappa over the support, for the control load
        self._nMk_cols = params.n_penalty * forms.M_kappa[:, self.support_nodes]

    # -- forward / objective / gradient --------------------------------------
    def new_control(self, value=0.0) -> ControlField:
        return ControlField.constant(self.support_nodes, self.grid.K, value)

    def forward(self, z: ControlField) -> Trajectory:
        K, nv = self.grid.K, self.forms.ndof
        tau = self.grid.tau
        loads = z.frames @ self._nMk_cols.T        # (K, ndof)
        frames = np.empty((K + 1, nv))
        frames[0] = 0.0
        u = frames[0]
        for k in range(1, K + 1):
            u = self.factor.solve(self.forms.M_omega @ u + tau * loads[k - 1])
            frames[k] = u
        return Trajectory(frames)

    def objective(self, z: ControlField, u_d: Trajectory):
        """Value of the tracking-plus-Tikhonov objective and the state."""
        state = self.forward(z)
        return self._value(z, state, u_d), state

    def _value(self, z, state, u_d):
        tau = self.grid.tau
        d = state.frames[1:] - u_d.frames[1:]
        track = 0.5 * tau * float(np.einsum("ki,ki->", d, d @ self.forms.M_omega))
        reg = 0.5 * self.params.xi * tau * float(
            np.einsum("ki,ki->", z.frames, z.frames @ self.M_hat))
        return track + reg

    def gradient(self, z: ControlField, u_d: Trajectory) -> ControlField:
        _, g, _ = self.obj_grad(z, u_d)
        return g

    def obj_grad(self, z: ControlField, u_d: Trajectory):
        """Objective, exact discrete gradient, and the state trajectory."""
        state = self.forward(z)
        val = self._value(z, state, u_d)
        residual = state.frames[1:] - u_d.frames[1:]
        p = solve_adjoint(self.forms, self.params, self.grid, residual,
                          factor=self.factor)
        tau = self.grid.tau
        # adjoint frame k-1 pairs with control frame k
        g = tau * (p.frames[:-1] @ self._nMk_cols
                   + self.params.xi * (z.frames @ self.M_hat))
        return val, z.copy_with(g), state

    # -- data synthesis -------------------------------------------------------
    def synthesize_data(self, z_true: ControlField, noise_sigma: float,
                        seed: int) -> Trajectory:
        """Forward data plus i.i.d. Gaussian noise on the interior node frames."""
        traj = self.forward(z_true)
        frames = traj.frames.copy()
        if noise_sigma > 0.0:
            rng = np.random.default_rng(seed)
            nodes = np.flatnonzero(self.mesh.omega_nodes)
            noise = rng.normal(0.0, noise_sigma, size=(self.grid.K, len(nodes)))
            frames[1:, nodes] += noise
        return Trajectory(frames)

    # -- optimization ---------------------------------------------------------
    def pbfgs_minimize(self, z0: ControlField, u_d: Trajectory,
                       opts: PbfgsOptions | None = None) -> PbfgsResult:
        """Projected limited-memory BFGS with Armijo backtracking.

        Trial points are projected onto the nonnegative cone; accepted steps
        satisfy j(z+) <= j(z) + c <g, z+ - z>.  Curvature pairs with
        s.y <= 1e-12 |s||y| are skipped and non-descent directions fall back
        to steepest descent.
        """
        if opts is None:
            opts = PbfgsOptions()
        if z0.frames.min(initial=0.0) < 0.0:
            raise ParameterError("z0 must be feasible (nonnegative)")
        shape = z0.frames.shape

        def as_field(x):
            return z0.copy_with(x.reshape(shape))

        x = z0.frames.ravel().copy()
        j, gfield, _ = self.obj_grad(as_field(x), u_d)
        g = gfield.frames.ravel()
        tol = opts.grad_tol if opts.grad_tol > 0 else 1e-8 * (1.0 + abs(j))

        S, Y, RHO = [], [], []
        history = []
        status = "max_iters"
        it = 0
        pg = np.linalg.norm(x - np.maximum(x - g, 0.0))
        history.append((0, j, pg, 0.0))
        for it in range(1, opts.max_iters + 1):
            if pg <= tol:
                status = "converged"
                break
            d = -self._two_loop(g, S, Y, RHO)
            if d @ g >= 0.0:
                d = -g
            alpha = 1.0
            accepted = False
            for _ in range(opts.max_backtracks):
                x_new = np.maximum(x + alpha * d, 0.0)
                step = x_new - x
                slope = g @ step
                j_new, g_new_f, _ = self.obj_grad(as_field(x_new), u_d)
                if j_new <= j + opts.armijo_c * slope and slope < 0.0:
                    accepted = True
                    break
                alpha *= opts.backtrack
            if not accepted:
                status = "line_search_failed"
                break
            g_new = g_new_f.frames.ravel()
            svec = x_new - x
            yvec = g_new - g
            sy = svec @ yvec
            if sy > 1e-12 * np.linalg.norm(svec) * np.linalg.norm(yvec):
                S.append(svec)
                Y.append(yvec)
                RHO.append(1.0 / sy)
                if len(S) > opts.memory:
                    S.pop(0)
                    Y.pop(0)
                    RHO.pop(0)
            x, j, g = x_new, j_new, g_new
            pg = np.linalg.norm(x - np.maximum(x - g, 0.0))
            history.append((it, j, pg, alpha))
        else:
            it = opts.max_iters
        if status == "max_iters" and pg <= tol:
            status = "converged"
        return PbfgsResult(z=project(as_field(x)), history=history,
                           status=status, iterations=it)

    @staticmethod
    def _two_loop(g, S, Y, RHO):
        q = g.copy()
        if not S:
            return q
        alphas = []
        for svec, yvec, rho in zip(reversed(S), reversed(Y), reversed(RHO)):
            a = rho * (svec @ q)
            alphas.append(a)
            q -= a * yvec
        gamma = (S[-1] @ Y[-1]) / (Y[-1] @ Y[-1])
        q *= gamma
        for (svec, yvec, rho), a in zip(zip(S, Y, RHO), reversed(alphas)):
            b = rho * (yvec @ q)
            q += (a - b) * svec
        return q
