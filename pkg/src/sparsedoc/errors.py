"""Shared exception types."""


class SparsedocError(Exception):
    """Base class for all package errors."""


class ParseError(SparsedocError, ValueError):
    """An input file could not be parsed (carries file/line context in the message)."""


class ValidationError(SparsedocError, ValueError):
    """Well-formed input violated an invariant (duplicate id, bad dimension, ...)."""


class NumericsError(SparsedocError, ArithmeticError):
    """Training produced a non-finite value; the offending step was aborted."""
