"""Exception hierarchy shared across the package."""


class FlexKnnError(ValueError):
    """Base class for all package errors."""


class InvalidParameter(FlexKnnError):
    pass


class DimensionMismatch(FlexKnnError):
    pass


class SingularMatrix(FlexKnnError):
    pass


class NonFinite(FlexKnnError):
    pass


class KTooLarge(FlexKnnError):
    pass


class NotBinary(FlexKnnError):
    pass


class DegenerateVariance(FlexKnnError):
    """Pearson correlation is undefined because one variable is constant."""


class EmptySelectSet(FlexKnnError):
    pass


class TooSmall(FlexKnnError):
    pass


class TooFew(FlexKnnError):
    pass


class NonFiniteObjective(FlexKnnError):
    pass


class RankTooSmall(FlexKnnError):
    pass


class ClassTooSmall(FlexKnnError):
    pass


class EmptyDataset(FlexKnnError):
    pass


class MissingColumn(FlexKnnError):
    pass


class ParseError(FlexKnnError):
    """Malformed input. ``row`` and ``col`` locate the offending cell when known."""

    def __init__(self, message, row=None, col=None):
        super().__init__(message)
        self.row = row
        self.col = col
