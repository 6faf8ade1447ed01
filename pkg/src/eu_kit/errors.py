"""Exception types shared by all modules."""


class EUKitError(Exception):
    """Base class for errors raised by eu_kit."""


class DomainError(EUKitError, ValueError):
    """A value lies outside its admissible domain (weights, points, steps)."""


class NormalizationError(DomainError):
    """Probability weights do not sum to one within tolerance."""


class DimensionError(EUKitError, ValueError):
    """Array shapes do not match the declared dimensions."""


class ConfigError(EUKitError, ValueError):
    """Unknown family, bad family parameters or malformed run configuration."""
