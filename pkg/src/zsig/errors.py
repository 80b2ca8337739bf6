"""Exception types shared across the toolkit."""


class ZsigError(Exception):
    """Base class for all toolkit errors."""


class DataFormatError(ZsigError):
    """A data file is malformed or inconsistent with its companions."""

    def __init__(self, message, path=None, line=None):
        ctx = ""
        if path is not None:
            ctx = f" [{path}" + (f":{line}" if line is not None else "") + "]"
        super().__init__(message + ctx)
        self.path = path
        self.line = line


class InvalidSplitError(ZsigError):
    """A seen/unseen split is empty, overlapping, or names unknown classes."""


class NumericalError(ZsigError):
    """A numerical routine produced a non-finite or degenerate result."""


class DegenerateCodeError(ZsigError):
    """A sparse code came back all-zero and cannot synthesize a signature."""


class ConfigError(ZsigError):
    """Invalid or unknown configuration input."""
