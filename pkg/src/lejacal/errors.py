"""Exception types raised across the package."""


class LejacalError(Exception):
    """Base class for all package errors."""


class SingularMatrix(LejacalError):
    """Interpolation matrix is numerically rank deficient."""


class UnboundedSearch(LejacalError):
    """Weight function admits no finite search region."""


class ConvergenceFailure(LejacalError):
    """An iterative scheme exhausted its iteration budget."""


class AllCandidatesSingular(LejacalError):
    """Every candidate node would make the interpolation matrix singular."""


class NodeSelectionFailure(LejacalError):
    """No admissible next node could be located."""


class NotPositiveDefinite(LejacalError):
    """Covariance matrix fails its Cholesky factorization."""


class ZeroMeanData(LejacalError):
    """Relative-error likelihood is undefined for zero-mean data."""


class QuadratureUnderflow(LejacalError):
    """Normalizing constant underflows the quadrature used to compute it."""


class UnboundedDivergence(LejacalError):
    """Divergence is infinite: the second density vanishes where the first does not."""


class DegenerateFit(LejacalError):
    """Convergence-rate fit has no spread in the abscissa."""


class ForwardModelFailure(LejacalError):
    """Forward model raised at a requested parameter point."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class ZeroDensityStart(LejacalError):
    """No starting point with positive posterior density was found."""


class NoSignChange(LejacalError):
    """Solution profile has no sign change to locate."""


class NonlinearSolveFailure(LejacalError):
    """Nonlinear solver failed to reach its residual tolerance."""


class ConfigError(LejacalError):
    """Configuration file is malformed or contains unknown keys."""
