class LaguerreError(Exception):
    """Base error for the Laguerre filtering library."""


class DomainError(LaguerreError, ValueError):
    """A parameter lies outside its mathematical domain."""


class ConditioningError(LaguerreError):
    pass


class UnsupportedConfiguration(LaguerreError):
    pass


class NonFiniteInput(LaguerreError):
    """Raised when NaN or infinity reaches a recursion."""

    def __init__(self, message: str, location: tuple[int, ...] = ()):
        super().__init__(message)
        self.location = location


class DimensionMismatch(LaguerreError):
    pass


class ConfigError(LaguerreError):
    pass


class FrameFormatError(LaguerreError):
    pass
