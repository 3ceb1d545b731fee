"""Exception hierarchy shared across the package.

Everything raised on purpose derives from :class:`ScisError` so callers can
catch one type at the boundary (the CLI maps it to exit code 2).
"""


class ScisError(Exception):
    """Base class for all errors raised by this package."""


class InvalidConfig(ScisError):
    """A configuration field violates its documented constraints."""


class ConfigInfeasible(InvalidConfig):
    """The requested (alpha, beta, k) admit no certifiable threshold <= 1."""


class InvalidSizes(ScisError):
    """Sample sizes are ordered or bounded incorrectly (e.g. n < n0)."""


class ShapeMismatch(ScisError):
    """Array shapes disagree with the operation's contract."""


class EmptyColumn(ScisError):
    """A column has zero observed values and cannot be normalized."""


class MissingRanges(ScisError):
    """Denormalization requested but no feature ranges are recorded."""


class NoObservedCells(ScisError):
    """The dataset (or validation set) contains no observed cells."""


class EmptyHoldout(ScisError):
    """A holdout split with zero hidden cells cannot be scored."""


class EmptyDataset(ScisError):
    """Training requested on a dataset with no rows."""


class NonFiniteLoss(ScisError):
    """Training produced a NaN or infinite loss; aborted with diagnostics."""


class NonFiniteCost(ScisError):
    """A cost matrix contains NaN or infinite entries."""


class DidNotConverge(ScisError):
    """Sinkhorn ran out of iterations.

    Carries the best-so-far :class:`~scis.sinkhorn.TransportResult` in
    ``result`` (with ``converged=False``) so callers may inspect or accept it.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class NotConverged(ScisError):
    """An operation that requires a converged transport plan received one
    whose ``converged`` flag is false."""


class SingularAfterRidge(ScisError):
    """Cholesky of (H + ridge*I) failed; the Hessian is numerically singular
    even after regularization."""


class TraceMismatch(ScisError):
    """A forward trace does not match the parameters/spec passed to backward."""


class ParseError(ScisError):
    """A delimited text file failed to parse.

    ``row`` and ``col`` are 0-based coordinates of the offending cell when
    known (col is None for structural problems such as ragged rows).
    """

    def __init__(self, message, row=None, col=None):
        super().__init__(message)
        self.row = row
        self.col = col


class NonNumericCell(ParseError):
    """A cell is neither a missing token nor a finite number."""


class IoError(ScisError):
    """A file could not be read or written."""
