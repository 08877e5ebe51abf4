"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, FormatError -> 3,
NumericsError -> 4. ShapeError is a programming/contract error and surfaces
as a normal traceback.
"""


class ShapeError(ValueError):
    """Operands have incompatible or invalid dimensions."""


class ConfigError(ValueError):
    """A configuration value or combination is invalid."""


class FormatError(ValueError):
    """An input file violates its declared format."""


class NumericsError(RuntimeError):
    """Training produced a non-finite value."""
