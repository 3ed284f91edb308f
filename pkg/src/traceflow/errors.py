"""Exception hierarchy shared by every traceflow module."""


class TraceflowError(Exception):
    """Base class for all library errors."""


class DomainError(TraceflowError, ValueError):
    """Argument outside the mathematical domain (negative powers, k <= 0, N <= 0, ...)."""


class UsageError(TraceflowError, TypeError):
    """Operands that cannot be combined, e.g. polynomials over different coefficient rings."""


class CapExceededError(TraceflowError, RuntimeError):
    """A configured resource cap (degree, matrix size) was exceeded."""


class NumericError(TraceflowError, ArithmeticError):
    """A dense numerical routine failed; the message carries diagnostics."""
