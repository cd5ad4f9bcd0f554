"""Exception hierarchy shared by all modules.

Errors split into two families that the command line maps to distinct exit
codes: bad input (``InputError``) and numerical failure on valid input
(``NumericalError``).
"""


class WPCAError(Exception):
    """Base class for every error raised by this package."""


class InputError(WPCAError, ValueError):
    """Input rejected before any computation was attempted."""


class ParameterError(InputError):
    """An argument is outside its admissible range."""


class ValidationError(InputError):
    """An array or record violates a structural requirement."""


class ParseError(InputError):
    """A data file could not be parsed."""


class EmptyDataError(InputError):
    """A data file or panel contains no usable observations."""


class NumericalError(WPCAError, ArithmeticError):
    """Computation on valid input hit a numerical degeneracy."""


class RankDeficiencyError(NumericalError):
    """A matrix has fewer positive singular values than the requested rank."""


class AlignmentError(NumericalError):
    """Estimated and true subspaces are numerically orthogonal."""


class DegeneracyError(NumericalError):
    """A quantity required to be invertible is singular."""


class EmptyHoldoutWarning(UserWarning):
    """Cross-validation was asked to score an empty validation set."""
