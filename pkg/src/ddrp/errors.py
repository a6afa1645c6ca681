"""Exception hierarchy shared by every ddrp module."""


class DDRPError(Exception):
    """Base class for all ddrp errors."""


class DimensionMismatch(DDRPError, ValueError):
    pass


class InvalidTrainingPair(DDRPError, ValueError):
    pass


class AllColumnsDependent(DDRPError):
    pass


class SingularGram(DDRPError):
    """Gram system is numerically singular and no regularization was requested."""


class NotInSpan(DDRPError, ValueError):
    pass


class ZeroFamily(DDRPError, ValueError):
    pass


class GeometryMismatch(DDRPError, ValueError):
    pass


class EmptyCorpus(DDRPError):
    pass


class InsufficientItems(DDRPError, ValueError):
    pass


class FormatError(DDRPError, ValueError):
    """A matrix or image file could not be parsed."""
