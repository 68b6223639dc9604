"""
Exception types raised by the simulator.
"""
from typing import Optional


class ChanSimError(Exception):
    """Base class for simulator errors."""


class ConfigError(ChanSimError, ValueError):
    """
    Invalid run configuration.

    Args:
        message: Human readable description
        key: Offending configuration key, if any
        line: 1-based line of the key in the config file, if known
    """

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(message)
        self.key = key
        self.line = line


class ModelValidityError(ChanSimError, ValueError):
    """Model evaluated outside its validity range."""


class DataFileError(ChanSimError, OSError):
    """Missing or unreadable data file."""


def check_range(name: str, value: float, low: float, high: float, unit: str = "") -> None:
    """
    Raise ModelValidityError unless low <= value <= high.

    Args:
        name: Parameter name used in the message
        value: Value to check
        low: Inclusive lower bound
        high: Inclusive upper bound
        unit: Unit suffix for the message
    """
    if not (low <= value <= high):
        suffix = f" {unit}" if unit else ""
        raise ModelValidityError(
            f"{name}={value:g}{suffix} outside validity range [{low:g}, {high:g}]{suffix}"
        )
