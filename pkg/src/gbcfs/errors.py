class GBCFSError(Exception):
    """Base class for library errors."""


class DataError(GBCFSError, ValueError):
    """Malformed or inconsistent input data."""


class KBFormatError(GBCFSError, ValueError):
    """Knowledge-base file that cannot be read back."""


class ConfigError(GBCFSError, ValueError):
    """Parameter outside its valid range."""
