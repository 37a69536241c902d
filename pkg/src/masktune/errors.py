"""Exception types shared across the package."""


class MasktuneError(Exception):
    """Base class for all package errors."""


class ShapeError(MasktuneError, ValueError):
    """Operands have incompatible or invalid shapes."""


class ConfigError(MasktuneError, ValueError):
    """A configuration value is out of range, unknown, or inconsistent."""


class InputError(MasktuneError, ValueError):
    """Runtime input (labels, batch contents) violates a precondition."""


class NumericError(MasktuneError, ArithmeticError):
    """A computation produced or received a non-finite value."""


class StateError(MasktuneError, RuntimeError):
    """An object is used outside its valid lifecycle (e.g. stale cache)."""
