"""Exception types raised across the package."""


class TopMError(Exception):
    """Base class for all package errors."""


class DegenerateState(TopMError):
    """Posterior undefined, e.g. no observations under an uninformative prior."""


class InvalidM(TopMError, ValueError):
    """Subset size ``m`` outside ``[1, k - 1]``."""


class BudgetTooSmall(TopMError, ValueError):
    pass


class DomainError(TopMError, ValueError):
    pass


class ZeroRatio(TopMError, ValueError):
    pass


class GridTooLarge(TopMError, ValueError):
    pass


class NoConvergence(TopMError, RuntimeError):
    pass


class ZeroFlow(TopMError, ValueError):
    """A source has no usable evacuation capacity."""


class SizeMismatch(TopMError, ValueError):
    pass


class ConfigError(TopMError, ValueError):
    """Invalid experiment or CLI configuration."""


class NetworkError(TopMError, ValueError):
    """Evacuation network fixture failed validation."""
