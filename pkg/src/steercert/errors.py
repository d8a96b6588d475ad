"""Exception types shared across the package."""

from __future__ import annotations


class SteerCertError(Exception):
    """Base class for all package errors."""


class OutOfRange(SteerCertError, ValueError):
    """A parameter lies outside its admissible interval."""


class ZeroVector(SteerCertError, ValueError):
    """A direction vector has (numerically) zero length."""


class UndefinedConditional(SteerCertError, ZeroDivisionError):
    """A conditional probability was requested for an outcome branch that never occurs."""

    def __init__(self, message: str, term=None):
        super().__init__(message)
        self.term = term


class NoConvergence(SteerCertError, RuntimeError):
    """A numerical solver failed to meet its residual target."""
