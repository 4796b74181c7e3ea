"""Exception types shared across the package.

The CLI maps :class:`PreconditionError` to exit code 2 and
:class:`ConvergenceError` to exit code 3.
"""


class AnisoError(Exception):
    """Base class for all package errors."""


class PreconditionError(AnisoError, ValueError):
    """Input violates an operation's precondition."""


class DegenerateInputError(PreconditionError):
    """Input is well formed but carries no usable information."""


class EmptyLevelSetError(DegenerateInputError):
    """The requested level set has no points inside the window."""


class LKCRefusal(PreconditionError):
    """The LKC estimator declines to answer (level too close to the mean)."""


class ConvergenceError(AnisoError, RuntimeError):
    """A numerical procedure failed to reach its tolerance."""
