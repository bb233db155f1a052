"""Exception and warning types raised across the package."""


class BesovNSError(Exception):
    """Base class for all package errors."""


class ResolutionExceeded(BesovNSError):
    """The spectral tail of a field is not resolved by the dealiased band."""


class StepUnstable(BesovNSError):
    """A time step blew up (norm growth or convective CFL violation)."""


class MeshMismatch(BesovNSError):
    """Two trajectories do not share a common time mesh."""


class ConfigError(BesovNSError, ValueError):
    """An experiment or solver configuration is invalid."""


class StructuralViolation(BesovNSError, ValueError):
    """An inequality has a vanishing right-hand side with a positive left-hand side."""


class VerificationFailed(BesovNSError):
    """A requested verification did not pass with its frozen constant."""


class UnderResolvedQuadrature(UserWarning):
    """A sigma- or time-quadrature is not converged at its endpoints."""


class DiagnosticWarning(UserWarning):
    """A verification diagnostic is unreliable (noise, degenerate split, short mesh)."""


class OutputError(BesovNSError):
    """An output file could not be written."""
