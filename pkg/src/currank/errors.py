"""Exception types shared across the package."""


class CurrankError(Exception):
    """Base class for all package-specific errors."""


class ParseError(CurrankError):
    """A data file could not be parsed. Carries the file path and line number."""

    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{self.path}:{lineno}: {message}")


class DataError(CurrankError):
    """Inputs are structurally valid but semantically inconsistent."""


class ConfigError(CurrankError):
    """A configuration file or option is invalid."""
