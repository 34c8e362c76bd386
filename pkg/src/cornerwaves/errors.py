"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`CornerWavesError`.  The command line maps the subclasses onto
exit codes (1 config, 2 guard, 3 solver).
"""


class CornerWavesError(Exception):
    """Base class for package errors."""


class ConfigError(CornerWavesError, ValueError):
    """Invalid physical or numerical parameters."""


class GeometryError(CornerWavesError, ValueError):
    """Invalid curves, frames or domain layout."""


class DomainError(GeometryError):
    """A query point lies outside the curve or domain."""


class AngleGuardError(CornerWavesError):
    """The contact angle left the admissible window."""

    def __init__(self, omega, lower, upper):
        self.omega = float(omega)
        self.lower = float(lower)
        self.upper = float(upper)
        super().__init__(
            f"contact angle {self.omega:.6g} outside ({self.lower:.6g}, {self.upper:.6g})"
        )


class MeshingError(CornerWavesError):
    """Triangulation failed or produced an invalid mesh."""


class TransferError(CornerWavesError):
    """Interpolation point too far from the source mesh."""


class SolverError(CornerWavesError):
    """Linear solve failed or did not converge."""


class DataError(CornerWavesError, ValueError):
    """Boundary data violate a compatibility condition."""


class ResolutionError(CornerWavesError, ValueError):
    """Too few samples for a requested quadrature."""
