"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage errors -> 1, data errors -> 2,
numeric failures -> 3.
"""


class GroupnetError(Exception):
    """Base class for all package errors."""


class UsageError(GroupnetError):
    """Bad arguments or a protocol violation (e.g. scoring a node that was
    never held out)."""


class DataFormatError(GroupnetError):
    """Malformed input files or inconsistent dataset contents."""


class NumericError(GroupnetError):
    """Non-finite objective or other numerical breakdown during fitting."""
