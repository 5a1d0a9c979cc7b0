"""Exception types raised across the package."""


class RankDiffError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(RankDiffError, ValueError):
    pass


class InvalidProfileError(RankDiffError, ValueError):
    pass


class DomainError(RankDiffError, ValueError):
    """Argument outside the domain where the quantity is defined."""


class NoStationaryLawError(RankDiffError):
    pass


class UnsupportedCaseError(RankDiffError):
    pass


class NumericalFailureError(RankDiffError, FloatingPointError):
    pass


class TruncationError(RankDiffError):
    """Truncated spatial domain cannot hold the distribution."""

    def __init__(self, message, mass_deficit=None):
        super().__init__(message)
        self.mass_deficit = mass_deficit


class SchemeFailureError(NumericalFailureError):
    pass


class IncompatibleGridError(RankDiffError, ValueError):
    pass


class UndefinedWaveError(RankDiffError):
    """Raised when the Oleinik condition fails, so no travelling wave exists."""


class DivergenceError(DomainError):
    pass


class InfiniteMeanError(RankDiffError):
    pass


class PreconditionError(RankDiffError, ValueError):
    pass


class NonIntegrabilityError(RankDiffError):
    pass


class CriticalPhaseError(RankDiffError):
    pass


class InsufficientDataError(RankDiffError, ValueError):
    pass


class ConfigError(RankDiffError, ValueError):
    """Configuration validation failure; ``key_path`` names the offending key."""

    def __init__(self, message, key_path=""):
        super().__init__(f"{key_path}: {message}" if key_path else message)
        self.key_path = key_path
