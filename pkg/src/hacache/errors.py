"""Exception hierarchy shared by every subpackage."""


class HACacheError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(HACacheError, ValueError):
    """Inputs are structurally wrong: length mismatch, unknown preset, bad key."""


class DomainError(HACacheError, ValueError):
    """A numeric argument lies outside the domain the operation is defined on."""


class SearchSpaceTooLarge(HACacheError):
    """A brute-force search would exceed its configured point budget."""


class EnvironmentFailure(HACacheError):
    """A measurement environment could not produce a telemetry cycle."""
