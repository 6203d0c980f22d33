"""Exception types shared across the package."""


class SchedulingError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInstanceError(SchedulingError, ValueError):
    """An instance violates a structural invariant (mixed prediction modes, bad fields)."""


class UnsupportedInputError(SchedulingError, ValueError):
    """Input is well formed but outside what the operation supports."""


class ResourceLimitError(SchedulingError, ValueError):
    """An exhaustive computation was asked to exceed its configured size bound."""


class TerminalStateError(SchedulingError, RuntimeError):
    """A policy was consulted in a state with no legal action."""


class ContractViolationError(SchedulingError, RuntimeError):
    """A policy returned an action that is illegal in the observed state."""
