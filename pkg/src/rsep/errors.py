"""Exception hierarchy shared by every module."""


class RsepError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(RsepError, ValueError):
    """A value left the real domain of an operation (log of a negative, point outside a chart, ...)."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class DivisionByZero(DomainError, ZeroDivisionError):
    pass


class NonFiniteError(RsepError, ArithmeticError):
    """Overflow or NaN in a result that should be finite."""


class DimensionMismatch(RsepError, ValueError):
    pass


class SignatureError(RsepError, ValueError):
    """The metric is not Riemannian (some g^ii <= 0) where positivity is required."""


class ParseError(RsepError, ValueError):
    """Syntax error in an expression; ``offset`` is a byte offset into the source text."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


class UndeclaredIdentifier(ParseError):
    def __init__(self, name, offset=None):
        super().__init__(f"undeclared identifier '{name}'", offset)
        self.name = name


class NonConstantExponent(ParseError):
    pass


class IntegrabilityError(RsepError):
    """The system d ln R = Gamma/2 is not integrable on the sampled points."""

    def __init__(self, pair, residual):
        super().__init__(
            f"R-factor system not integrable: pair {pair} has residual {residual:.3e}"
        )
        self.pair = pair
        self.residual = residual


class ConsistencyError(RsepError):
    """Two independent evaluations of the same quantity disagree."""


class CertificationError(RsepError):
    """An operation was requested on a metric that has not passed the required checks."""


class IntegrationError(RsepError):
    pass


class ConfigError(RsepError):
    def __init__(self, message, line=None, key=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
        self.key = key
