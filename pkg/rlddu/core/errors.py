"""
RLDDU Errors
Exception hierarchy shared by the numerical modules, solvers and the CLI.
"""


class RldduError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(RldduError, ValueError):
    """Array dimensions do not match the system dimensions."""


class DegenerateError(RldduError, ArithmeticError):
    """Singular or all-zero input (zero precoders, zero B̃, non-PD block)."""


class ConfigError(RldduError, ValueError):
    """Invalid experiment configuration or missing referenced file."""
