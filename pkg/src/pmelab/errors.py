"""Exception types shared across the package."""


class PmeLabError(Exception):
    """Base class for all package errors."""


class DomainError(PmeLabError, ValueError):
    """Argument outside the domain of an operation."""


class ShapeError(PmeLabError, ValueError):
    """Fields defined on incompatible discretizations."""


class InvalidIndexError(PmeLabError, ValueError):
    """Eigen-index not admissible for the dimension."""


class ConfigurationError(PmeLabError, ValueError):
    """Inconsistent numerical configuration."""


class ConstructionError(PmeLabError, RuntimeError):
    """A numerical construction (eigen-solve, quadrature) failed."""


class RegimeExitError(PmeLabError, RuntimeError):
    """The solution left the neighborhood where the equation is valid."""


class NonInvertibleError(PmeLabError, ValueError):
    """Coordinate map is not a diffeomorphism on the given data."""


class FoldError(NonInvertibleError):
    """Inverse coordinate map folds (nonpositive Jacobian)."""


class InsufficientSignalError(PmeLabError, RuntimeError):
    """Signal fell below resolution before a fit window filled."""


class DivergentIterationError(ConfigurationError):
    """A fixed-point iteration failed to contract."""
