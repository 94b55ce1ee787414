"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
anything else -> 1.
"""


class IacsmellError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(IacsmellError):
    """Invalid configuration or usage (bad flag values, bad config files)."""


class DataError(IacsmellError):
    """Input data violates the dataset schema or an operation precondition."""
