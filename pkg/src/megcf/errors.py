"""Exception types shared across the package.

Two broad families: :class:`DataError` for invalid or inconsistent inputs
(bad files, malformed graphs, infeasible generator specs) and
:class:`NumericalError` for computations that produced non-finite or
undefined values.  The CLI maps these to distinct exit codes.
"""


class MegcfError(Exception):
    """Base class for all package-specific errors."""


class DataError(MegcfError):
    """Invalid or inconsistent input data."""


class NumericalError(MegcfError):
    """A computation produced non-finite or undefined values."""


class DuplicateEdgeError(DataError):
    pass


class IndexOutOfRangeError(DataError):
    pass


class EmptyGraphError(DataError):
    pass


class DanglingEntityError(DataError):
    pass


class ZeroDegreeError(NumericalError):
    pass


class EmptyReviewListError(DataError):
    pass


class ScoreOutOfRangeError(DataError):
    pass


class NonFiniteEmbeddingError(NumericalError):
    pass


class NonFiniteGradientError(NumericalError):
    pass


class NonFiniteParameterError(NumericalError):
    pass


class NonFiniteScoreError(NumericalError):
    pass


class UserWithAllItemsError(DataError):
    pass


class TooFewInteractionsError(DataError):
    pass


class TooFewCandidatesError(DataError):
    pass


class EmptyAfterFilterError(DataError):
    pass


class InfeasibleSpecError(DataError):
    pass


class VersionMismatchError(DataError):
    pass


class ShapeMismatchError(DataError):
    pass


class CorruptFileError(DataError):
    pass
