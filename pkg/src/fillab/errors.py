"""Exception types shared across the package."""


class FillabError(Exception):
    """Base class for every error raised by fillab."""


class NonPureComplex(FillabError):
    pass


class DanglingVertex(FillabError):
    pass


class SeedNotAllowed(FillabError):
    pass


class RemovalOutOfBounds(FillabError):
    pass


class EscapesMargin(FillabError):
    pass


class DegenerateInput(FillabError):
    pass


class UnsupportedDimension(FillabError):
    pass


class NotNullHomologous(FillabError):
    pass


class RectangleNotStarFillable(FillabError):
    pass


class EmptyFamily(FillabError):
    pass


class CapFillUnavailable(FillabError):
    pass


class NonDecayingRemainder(FillabError):
    pass


class NotFoldedVertex(FillabError):
    pass


class NonTerminating(FillabError):
    pass


class NoEmptyAnnulus(FillabError):
    pass


class InsufficientPoints(FillabError):
    pass


class NonPositiveValue(FillabError):
    pass


class EmptyRecords(FillabError):
    pass


class ConfigError(FillabError):
    pass


class FormatError(FillabError):
    pass


class BoundViolation(FillabError):
    pass
