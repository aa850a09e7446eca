"""Exception types shared across the package.

The CLI maps these onto exit codes, so every failure raised by library code
should be one of these (or a plain ``OSError`` for filesystem problems).
"""


class LPMGHError(Exception):
    """Base class for package errors."""


class ConfigError(LPMGHError, ValueError):
    """Invalid parameters or option combinations."""


class FormatError(LPMGHError, ValueError):
    """A file does not parse under its declared format."""


class ShapeError(LPMGHError, ValueError):
    """Array shapes do not agree."""


class MissingViewError(ShapeError):
    """Fewer feature views supplied than the model was trained on."""


class NumericError(LPMGHError, ArithmeticError):
    """A numerical routine produced NaN/Inf or a singular system."""


class DegenerateError(LPMGHError, ArithmeticError):
    """Input is degenerate in a way that makes the quantity undefined."""
