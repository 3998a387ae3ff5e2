"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: validation errors exit 2, I/O errors
exit 3 (plain OSError), numerical failures exit 4.
"""


class DrnnError(Exception):
    """Base class for all package errors."""


class ValidationError(DrnnError, ValueError):
    """Bad arguments, shapes, or configuration."""


class MissingColumnError(ValidationError):
    """A requested CSV column is absent."""


class EmptyDataError(ValidationError):
    """No usable rows survived parsing."""


class DegenerateColumnError(ValidationError):
    """A column has zero sample standard deviation."""


class NumericalError(DrnnError):
    """Numerical failure inside an estimator."""


class RankDeficiencyError(NumericalError):
    """QR input lost full column rank."""

    def __init__(self, column: int, message: str | None = None):
        self.column = column
        super().__init__(message or f"rank-deficient input: column {column} is numerically dependent")


class DivergenceError(NumericalError):
    """Training produced a non-finite loss."""

    def __init__(self, iteration: int, loss_prefix=None, message: str | None = None):
        self.iteration = iteration
        self.loss_prefix = list(loss_prefix) if loss_prefix is not None else []
        super().__init__(message or f"non-finite loss at iteration {iteration}")


class BandwidthError(NumericalError):
    """Kernel bandwidth collapsed or produced a degenerate weight matrix."""


class WhiteningError(NumericalError):
    """Sample covariance is too close to singular to whiten."""
