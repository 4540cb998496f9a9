"""Exception types raised across the package."""


class MllError(Exception):
    """Base class for all package errors."""


class DomainViolation(MllError):
    """A point lies on or outside the primal or dual domain of a map."""


class NoConvergence(MllError):
    """An iterative solve (Newton inversion, root finding) failed."""


class Unsupported(MllError):
    """The requested operation has no implementation for this combination."""


class SizeMismatch(MllError, ValueError):
    pass


class TooLarge(MllError, ValueError):
    pass


class DegenerateGrid(MllError, ValueError):
    pass


class DegeneratePair(MllError, ValueError):
    pass


class SingularConstraints(MllError, ValueError):
    pass


class NotContractive(MllError, ValueError):
    """Raised when alpha >= m, so no contraction rate beta = m - alpha exists."""


class InsufficientBurnIn(MllError):
    """The tail of a bias trace still drifts beyond Monte Carlo noise."""


class ConfigInvalid(MllError, ValueError):
    pass


class StepTooLarge(UserWarning):
    """Advisory: step size exceeds the configured cap."""


class ImpreciseEstimate(UserWarning):
    """A Monte Carlo half-width exceeds 30% of its point estimate."""
