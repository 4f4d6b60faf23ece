"""Exception hierarchy shared across the package."""


class ProvisionError(Exception):
    """Base class for all package errors."""


class DomainError(ProvisionError, ValueError):
    """A parameter lies outside its admissible range."""


class CohortSizeError(ProvisionError, ValueError):
    """The purchased cohort does not have the size the accuracy target requires."""


class ShapeError(ProvisionError, ValueError):
    """Histograms over different category sets were compared."""


class ThresholdError(ProvisionError):
    """No threshold bidder exists to set the VCG price."""


class BudgetError(ProvisionError):
    """The budget cannot buy even a single data-use right."""


class MismatchError(ProvisionError):
    """An auction outcome refers to consumers absent from the population."""


class NoBracketError(ProvisionError):
    """The marginal-cost equation has no sign change on the search bracket.

    ``side`` is ``"below"`` when demand sits under marginal cost everywhere
    (zero provision) and ``"above"`` when it exceeds marginal cost everywhere.
    """

    def __init__(self, message, side=None):
        super().__init__(message)
        self.side = side


class QuadratureError(ProvisionError):
    """Numeric integration failed to reach the requested tolerance."""


class ModelError(ProvisionError, ValueError):
    """An invalid distribution specification."""


class ParseError(ProvisionError, ValueError):
    """Malformed input file; ``line`` carries the 1-based line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class RangeError(ParseError):
    """A parsed value is outside its valid range."""


class NonMonotoneWarning(UserWarning):
    """Marginal cost crosses the demand level more than once on the bracket."""


class QuantileDerivativeWarning(UserWarning):
    """Q' was approximated by finite differences on a step distribution."""
