"""Exception types raised by the library.

Everything derives from ``DVLRError`` so callers (and the CLI) can separate
library failures from programming errors. The CLI maps ``ConfigError`` and
``DataError`` to exit code 1 and ``InternalError`` to exit code 2.
"""


class DVLRError(Exception):
    """Base class for all library errors."""


class DimensionError(DVLRError, ValueError):
    """Tensor shapes are incompatible with the requested operation."""


class ConfigError(DVLRError, ValueError):
    """An invalid setting: bad rate, bad threshold range, unknown kind, ..."""


class ParseError(ConfigError):
    """Malformed schedule/config text. ``position`` is a 0-based char offset."""

    def __init__(self, message, text="", position=0):
        self.text = text
        self.position = position
        super().__init__(f"{message} (at position {position} in {text!r})")


class DataError(DVLRError, ValueError):
    """Input data is inconsistent (labels out of range, missing files, ...)."""


class FormatError(DataError):
    """A dataset file does not follow its binary container format."""

    def __init__(self, message, path=None, offset=None):
        self.path = path
        self.offset = offset
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"byte offset {offset}")
        suffix = f" [{', '.join(where)}]" if where else ""
        super().__init__(message + suffix)


class InternalError(DVLRError, RuntimeError):
    """An invariant the library relies on was violated."""
