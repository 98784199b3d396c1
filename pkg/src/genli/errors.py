"""Exception types shared across the package.

Each maps to a distinct process exit code so shell pipelines can tell
misconfiguration apart from bad input data and from numerical blow-ups.
"""

from __future__ import annotations


class GenliError(Exception):
    """Base class for all errors raised deliberately by this package."""

    exit_code = 1


class ConfigError(GenliError):
    """Invalid or inconsistent configuration (unknown key, bad value, ...)."""

    exit_code = 2


class DataError(GenliError):
    """Malformed input data: bad record lines, empty sequences, id overflow."""

    exit_code = 3


class NumericalError(GenliError):
    """Non-finite values encountered where finite ones are required."""

    exit_code = 4
