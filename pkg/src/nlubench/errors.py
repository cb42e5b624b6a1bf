"""Common base class for all harness errors, so callers can catch one type."""


class HarnessError(Exception):
    """Base class for every structured error raised by this package."""
