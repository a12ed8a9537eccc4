"""Exception hierarchy shared by the samplers."""


class ExactSimError(Exception):
    """Base class for all errors raised by this package."""


class PreconditionError(ExactSimError, ValueError):
    """An argument violates the documented preconditions of an operation."""


class ContractViolation(ExactSimError, RuntimeError):
    """A user-supplied bound or an internal series contract was broken.

    Raised when an observed value shows that a promised inequality does not
    hold, e.g. phi leaving its declared bounds or a series losing its
    alternating structure.
    """


class NumericalPrecisionError(ExactSimError, ArithmeticError):
    """Floating point resolution is insufficient to decide an event exactly."""


class AttemptCapExceeded(ExactSimError, RuntimeError):
    """A rejection loop exceeded its diagnostic attempt cap."""


class ConfigError(ExactSimError, ValueError):
    """Invalid or incompatible run configuration."""
