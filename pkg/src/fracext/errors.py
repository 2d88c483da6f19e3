"""Exception types shared across the package."""


class FracExtError(Exception):
    """Base class for all package errors."""


class ParameterError(FracExtError, ValueError):
    """A numeric parameter is outside its admissible range."""


class GeometryError(FracExtError, ValueError):
    """Infeasible geometry specification."""


class MeshParseError(FracExtError, ValueError):
    """Malformed mesh file; message carries the offending line number."""


class MeshValidationError(FracExtError, ValueError):
    """Mesh violates a structural invariant (conformity, orientation, tags)."""


class SolverError(FracExtError, RuntimeError):
    """Linear algebra failure (non-SPD system, singular matrix)."""


class ConfigError(FracExtError, ValueError):
    """Bad run configuration (unknown key, missing key, bad range)."""
