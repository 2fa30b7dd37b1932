"""Exception types shared across the engine."""


class IrsError(Exception):
    """Base class for every error raised by irs_engine."""


class ValidationError(IrsError, ValueError):
    """Input data, index sets or configuration failed validation."""


class EstimationError(IrsError, RuntimeError):
    """Internal inconsistency detected while estimating a score."""


class EnumerationBudgetError(IrsError):
    """Exhaustive enumeration would exceed the configured tuple budget."""
