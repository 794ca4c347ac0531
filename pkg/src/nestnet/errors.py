"""Exception hierarchy shared across the package."""


class NestNetError(Exception):
    """Base class for all package-specific failures."""


class BackendMismatchError(NestNetError, TypeError):
    """Exact and float scalars were mixed in one computation."""


class ValidationError(NestNetError, ValueError):
    """A net, piecewise-linear function, or document is malformed."""


class RegistryCollisionError(ValidationError):
    """Two structurally different sub-nets were registered under one id."""


class ResourceLimitError(NestNetError, RuntimeError):
    """An operation refused to run because a configured limit was exceeded.

    Raised *before* doing the work, never after a partial blowup.
    """


class GapConditionError(NestNetError, ValueError):
    """Input data violates a precondition (e.g. consecutive fit values
    differ by more than the fit quantum)."""


class DivergenceError(NestNetError, ArithmeticError):
    """A training run produced a non-finite loss and was halted."""
