"""Exception hierarchy shared by every module."""

from __future__ import annotations


class OrliczLabError(Exception):
    """Base class for library errors."""


class UsageError(OrliczLabError, ValueError):
    """Bad arguments or preconditions supplied by the caller."""


class DomainError(UsageError):
    """Argument outside the domain of a growth function."""


class ConfigError(UsageError):
    """Invalid experiment configuration or violated theorem hypothesis."""


class FieldFormatError(UsageError):
    """Malformed serialized field, sequence or family."""


class BracketOverflowError(OrliczLabError, ArithmeticError):
    """A bisection bracket could not be found in floating range."""


class UnboundedError(OrliczLabError, ArithmeticError):
    """A supremum is still increasing at the search limit."""


class DegenerateFunctionError(OrliczLabError, ArithmeticError):
    """A growth function or weight vanishes where division is needed."""


class ResolutionError(OrliczLabError, ValueError):
    """A cube is finer than the mesh it is evaluated on."""


class DecompositionError(OrliczLabError, RuntimeError):
    """Sparse decomposition failed to reach the packing target."""

    def __init__(self, message: str, packing: float):
        super().__init__(message)
        self.packing = packing
