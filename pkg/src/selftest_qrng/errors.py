"""Exception types raised across the package."""


class QRNGError(Exception):
    """Base class for all package errors."""


class ConfigError(QRNGError, ValueError):
    """Invalid configuration value or file.

    ``field`` names the offending key (dotted path) when known.
    """

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if field:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class InvariantViolation(QRNGError, ValueError):
    """A domain object breaks one of its invariants."""


class InputNeverSentError(QRNGError, ValueError):
    """A conditional probability was requested for an input with no samples."""


class InfeasibleCorrelationsError(QRNGError):
    """No realization reproduces the observed correlations under the energy bound."""


class NumericalFailureError(QRNGError, RuntimeError):
    """A numerical solver did not reach the required tolerance."""


class NoCrossingError(QRNGError, ValueError):
    """The threshold balance function has no sign change inside the bracket."""


class ConvergenceError(QRNGError, RuntimeError):
    """An iterative search exhausted its iteration budget."""


class UnknownExperimentError(QRNGError, ValueError):
    """Requested experiment name is not registered."""
