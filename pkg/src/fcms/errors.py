"""Exception hierarchy shared by every fcms module."""


class FCMSError(Exception):
    """Base class for all fcms errors."""


class ParameterError(FCMSError, ValueError):
    """A parameter or configuration value violates its constraint."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class DimensionError(FCMSError, ValueError):
    """Initial state does not match the requested model kind."""


class PreconditionError(FCMSError, ValueError):
    """An operation was called outside its declared domain."""


class InsufficientSamplesError(FCMSError, ValueError):
    pass


class NumericalError(FCMSError, ArithmeticError):
    """A numerical routine failed (non-convergence, undefined quantity)."""


class DivergenceError(NumericalError):
    """Non-finite values reached a stepper.

    ``field`` names the offending component; ``index`` is set for
    population states.
    """

    def __init__(self, field, value=None, index=None):
        self.field = field
        self.value = value
        self.index = index
        where = field if index is None else f"{field}[{index}]"
        super().__init__(f"non-finite value in {where}: {value!r}")


class UndefinedRecoveryError(NumericalError):
    """Recovery time requested where the spectral radius is >= 1."""


class NoStationarySolutionError(NumericalError):
    pass


class UndefinedAutocorrelationError(NumericalError):
    pass


class InvariantViolation(FCMSError, RuntimeError):
    """A structural property that an experiment guarantees did not hold."""
