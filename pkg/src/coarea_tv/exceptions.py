"""Exception types raised across the package."""


class ConfigurationError(ValueError):
    """Malformed potential table, stencil, or configuration file."""


class DomainError(ValueError):
    """Input outside the mathematical domain of an operation (e.g. non-finite entries)."""


class PreconditionError(ValueError):
    """An operation was called with arguments violating its preconditions."""


class CoercivityError(ValueError):
    """The potential does not satisfy the coercivity assumption where it is required."""


class MonotonicityError(RuntimeError):
    """Level sets returned by the oracle are not nested (signals a non-submodular potential)."""
