"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage errors -> 1, data errors -> 2,
numerical failures -> 3.
"""


class RobustRkmError(Exception):
    """Base class for all package errors."""


class UsageError(RobustRkmError):
    """Bad command-line arguments or configuration keys/values."""


class DataError(RobustRkmError):
    """Malformed or invalid input data."""


class NumericalError(RobustRkmError):
    """A numerical procedure failed or produced non-finite results."""


class ParseError(DataError):
    """A file could not be parsed; carries row/column context when known."""

    def __init__(self, message: str, row: int | None = None, col: int | None = None):
        loc = ""
        if row is not None:
            loc = f" (row {row}" + (f", col {col})" if col is not None else ")")
        super().__init__(message + loc)
        self.row = row
        self.col = col


class DataValidationError(DataError):
    """Input values violate a documented precondition (non-finite, out of range)."""


class VersionMismatch(DataError):
    """Checkpoint magic/version/checksum does not match what this build writes."""


class DegenerateScatter(NumericalError):
    """Covariance of the selected subset is singular; no robust scatter exists."""


class SubsetTooSmall(NumericalError):
    """Requested MCD subset size is below the breakdown-optimal minimum."""


class EigFailure(NumericalError):
    """The symmetric eigensolver did not converge or violated its residual bound."""


class ShortSpectrum(NumericalError):
    """Fewer usable eigenvalues than the requested latent dimension."""

    def __init__(self, message: str, achievable: int):
        super().__init__(message)
        self.achievable = achievable


class NumericalFault(NumericalError):
    """Non-finite values encountered in a forward/backward pass or loss."""


class FitError(NumericalError):
    """Fitting a latent Gaussian failed (singular covariance)."""


class DivergenceAbort(NumericalError):
    """Training loss diverged; carries the epoch index where it happened."""

    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch
