"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: FormatError -> 2, ConfigError -> 3.
"""


class LandcoverError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(LandcoverError, ValueError):
    """Malformed, missing or inconsistent data (files, shapes, band counts)."""


class ConfigError(LandcoverError, ValueError):
    """Invalid configuration value or numerically degenerate input."""


class DegenerateInputError(ConfigError):
    """Input has no spread to work with (e.g. all row means equal)."""
