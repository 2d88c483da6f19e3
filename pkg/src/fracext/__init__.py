"""Finite elements for fractional parabolic problems with exterior data.

Solves the Robin exterior-value problem for the integral fractional
Laplacian, approximates the Dirichlet exterior-value problem through the
Robin penalty, and identifies exterior sources by an adjoint-based projected
quasi-Newton method.
"""

__version__ = "0.1.0"

from .errors import (ConfigError, FracExtError, GeometryError, MeshParseError,
                     MeshValidationError, ParameterError, SolverError)
from .mesh import (Disk, GeometrySpec, Square, SquareAnnulus, TriMesh,
                   generate_mesh, load_mesh, locate_region, refine_uniform,
                   save_mesh)
from .fracform import (AssembledForms, FracParams, assemble_forms,
                       assemble_load_exterior, assemble_mass_interior,
                       assemble_mass_kappa, assemble_stiffness, c_ns, gamma_fn,
                       quadrature_rule)
from .evolve import (CholeskyFactor, TimeGrid, Trajectory, linear_solve,
                     make_factor, solve_adjoint, solve_forward, system_matrix)
from .identify import (ControlField, PbfgsOptions, PbfgsResult,
                       SourceIdentification, project)
from .study import (ExactSolution, RateResult, l2qt_error, robin_dirichlet_rate,
                    spatial_rate)
