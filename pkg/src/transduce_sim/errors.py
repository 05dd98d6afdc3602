"""Exception hierarchy shared across the simulator."""


class TransduceError(Exception):
    """Base class for all simulator errors."""


class DomainError(TransduceError, ValueError):
    """Input outside the mathematical domain of a closed-form relation."""


class ValidityError(TransduceError, ValueError):
    """A physical approximation the model relies on does not hold."""


class ConfigError(TransduceError, ValueError):
    """Configuration failed schema validation.

    ``path`` is the dotted field path of the offending entry.
    """

    def __init__(self, message, path=""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class ResourceError(TransduceError, MemoryError):
    pass


class IntegrationError(TransduceError, RuntimeError):
    """Raised when a density matrix invariant fails during evolution."""

    def __init__(self, invariant, time, value):
        self.invariant = invariant
        self.time = time
        self.value = value
        super().__init__(
            f"{invariant} violated at t = {time * 1e9:.3f} ns (value {value:.3e})"
        )


class FitError(TransduceError, RuntimeError):
    pass


class EstimatorError(TransduceError, ValueError):
    pass
