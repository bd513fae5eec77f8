"""Exception hierarchy shared by the library and the CLI."""


class DPAdsError(Exception):
    """Base class for all errors raised by dpads."""


class InvalidInputError(DPAdsError, ValueError):
    """Input data violates an operation's preconditions."""


class InvalidParameterError(DPAdsError, ValueError):
    """A numeric parameter (rate, epsilon, gamma, ...) is out of range."""


class ConfigurationError(DPAdsError):
    """An experiment or mechanism configuration is inconsistent."""


class DataError(DPAdsError):
    """An auction log could not be ingested."""


class ContractViolation(DPAdsError):
    """A caller broke an operation's contract (e.g. passed unranked input)."""
