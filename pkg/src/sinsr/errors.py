"""Exception hierarchy shared by all sinsr modules."""


class SinsrError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(SinsrError):
    """Operand shapes are incompatible."""


class RankError(SinsrError):
    """Operand has the wrong rank (e.g. backward() on a non-scalar)."""


class RangeError(SinsrError):
    """A timestep or index is outside its valid range."""


class ConfigError(SinsrError):
    """A configuration value violates its constraints."""


class StateError(SinsrError):
    """An operation was called in an invalid state (e.g. missing gradients)."""


class FormatError(SinsrError):
    """A binary file has a bad magic number, version, or layout."""


class IoError(SinsrError):
    """A file is truncated or otherwise unreadable."""


class NumericError(SinsrError):
    """A non-finite value appeared where finite values are required."""
