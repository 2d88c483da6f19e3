"""Backward-Euler stepping for the regularized state equation and its adjoint.

The fully discrete scheme advances

    M_omega u^k + tau (A + n M_kappa) u^k
        = tau M_omega f^k + tau n M_kappa z^k + M_omega u^(k-1)

and the adjoint recursion is its algebraic transpose run backwards in time,
so discrete gradients of discrete objectives are exact.  One Cholesky
factorization is shared by all K steps; a factor is immutable and may be
used concurrently for distinct right-hand sides.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ParameterError, SolverError
from .fracform import AssembledForms, FracParams

__all__ = ["TimeGrid", "Trajectory", "CholeskyFactor", "system_matrix",
           "linear_solve", "solve_forward", "solve_adjoint", "m_seminorm",
           "export_trajectory_csv"]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid on [0, T] with K backward-Euler steps."""

    T: float
    K: int

    def __post_init__(self):
        if self.K < 1 or self.K != int(self.K):
            raise ParameterError(f"K must be a positive integer, got {self.K}")
        if not self.T > 0:
            raise ParameterError(f"T must be > 0, got {self.T}")

    @property
    def tau(self) -> float:
        return self.T / self.K

    def times(self) -> np.ndarray:
        return self.tau * np.arange(self.K + 1)


@dataclass
class Trajectory:
    """Nodal field at the K+1 time levels; frames[k] is the value at k*tau."""

    frames: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=float)
        if self.frames.ndim != 2:
            raise ParameterError("frames must be a (K+1, ndof) array")
        if not np.isfinite(self.frames).all():
            raise ParameterError("trajectory contains non-finite values")

    @property
    def n_steps(self) -> int:
        return self.frames.shape[0] - 1

    @property
    def ndof(self) -> int:
        return self.frames.shape[1]


class CholeskyFactor:
    """Cached SPD factorization with solve/factorization counters."""

    def __init__(self, S: np.ndarray, node_classifier=None):
        self.n_factorizations = 0
        self.n_solves = 0
        try:
            self._cf = scipy.linalg.cho_factor(S, lower=True, check_finite=False)
        except scipy.linalg.LinAlgError as exc:
            pivot = _parse_pivot(str(exc))
            detail = ""
            if pivot is not None and node_classifier is not None:
                detail = f" (node {pivot - 1}: {node_classifier(pivot - 1)})"
            raise SolverError(
                f"system matrix is not positive definite{detail}: {exc}") from exc
        self.n_factorizations = 1

    def solve(self, b: np.ndarray) -> np.ndarray:
        self.n_solves += 1
        return scipy.linalg.cho_solve(self._cf, b, check_finite=False)


def _parse_pivot(msg: str):
    m = re.search(r"(\d+)-th leading minor", msg)
    return int(m.group(1)) if m else None


def _classifier(mesh):
    def classify(i):
        if mesh is None:
            return "unknown"
        if mesh.omega_nodes[i]:
            return "interior (OMEGA star)"
        if mesh.kappa_nodes[i]:
            return "exterior kappa-support"
        return "exterior without kappa support"
    return classify


def system_matrix(forms: AssembledForms, params: FracParams,
                  grid: TimeGrid) -> np.ndarray:
    """S = M_omega + tau (A + n M_kappa); SPD when kappa has positive measure."""
    tau = grid.tau
    return forms.M_omega + tau * (forms.A + params.n_penalty * forms.M_kappa)


def linear_solve(S: np.ndarray, b: np.ndarray) -> np.ndarray:
    """One-shot SPD solve (factor + back substitution)."""
    return CholeskyFactor(S).solve(b)


def make_factor(forms: AssembledForms, params: FracParams, grid: TimeGrid,
                mesh=None) -> CholeskyFactor:
    return CholeskyFactor(system_matrix(forms, params, grid), _classifier(mesh))


def solve_forward(forms: AssembledForms, params: FracParams, grid: TimeGrid,
                  z_frames=None, f_frames=None, u0=None,
                  factor: CholeskyFactor | None = None) -> Trajectory:
    """March the state; z_frames / f_frames hold nodal data for k = 1..K.

    z is the exterior datum entering through n M_kappa, f the interior source
    entering through M_omega; either may be None for zero data.
    """
    K, nv = grid.K, forms.ndof
    if factor is None:
        factor = make_factor(forms, params, grid)
    rhs_zt = _frame_load(z_frames, params.n_penalty * forms.M_kappa, K, nv, "z_frames")
    rhs_ft = _frame_load(f_frames, forms.M_omega, K, nv, "f_frames")
    frames = np.empty((K + 1, nv))
    frames[0] = 0.0 if u0 is None else np.asarray(u0, dtype=float)
    tau = grid.tau
    u = frames[0]
    for k in range(1, K + 1):
        b = forms.M_omega @ u
        if rhs_ft is not None:
            b += tau * rhs_ft[k - 1]
        if rhs_zt is not None:
            b += tau * rhs_zt[k - 1]
        u = factor.solve(b)
        frames[k] = u
    return Trajectory(frames)


def _frame_load(frames, M, K, nv, name):
    if frames is None:
        return None
    arr = np.asarray(frames, dtype=float)
    if arr.shape != (K, nv):
        raise ParameterError(f"{name} must have shape ({K}, {nv}), got {arr.shape}")
    return arr @ M.T    # row k-1 = M @ frame^k (M symmetric)


def solve_adjoint(forms: AssembledForms, params: FracParams, grid: TimeGrid,
                  residual_frames, factor: CholeskyFactor | None = None) -> Trajectory:
    """Exact discrete adjoint of solve_forward.

    residual_frames[k-1] is the objective derivative at level k = 1..K.
    Returned frames satisfy p[K] = 0 and

        S p[k-1] = tau M_omega r^k + M_omega p[k],

    so control frame k pairs with adjoint frame k-1 in the gradient.
    """
    K, nv = grid.K, forms.ndof
    if factor is None:
        factor = make_factor(forms, params, grid)
    r = np.asarray(residual_frames, dtype=float)
    if r.shape != (K, nv):
        raise ParameterError(
            f"residual_frames must have shape ({K}, {nv}), got {r.shape}")
    tau = grid.tau
    frames = np.empty((K + 1, nv))
    frames[K] = 0.0
    p_next = frames[K]
    for k in range(K, 0, -1):
        b = forms.M_omega @ (tau * r[k - 1] + p_next)
        p_next = factor.solve(b)
        frames[k - 1] = p_next
    return Trajectory(frames)


def m_seminorm(M: np.ndarray, v: np.ndarray) -> float:
    return float(np.sqrt(max(v @ (M @ v), 0.0)))


def export_trajectory_csv(traj: Trajectory, mesh, outdir, prefix="frame",
                          stride: int = 1, node_subset=None) -> list:
    """Write one "node,x,y,value" CSV per exported frame; returns the paths."""
    from .cli import write_field_csv
    import os
    if stride < 1:
        raise ParameterError("stride must be >= 1")
    paths = []
    for k in range(0, traj.frames.shape[0], stride):
        path = os.path.join(outdir, f"{prefix}_{k:05d}.csv")
        write_field_csv(mesh, traj.frames[k], path, node_subset=node_subset)
        paths.append(path)
    return paths
