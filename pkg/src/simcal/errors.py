"""Exception hierarchy.

Two families matter to the CLI: :class:`ValidationError` (bad input
values, exit code 2) and :class:`FormatError` (unreadable or malformed
files, exit code 3).
"""


class SimcalError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(SimcalError, ValueError):
    pass


class FormatError(SimcalError, OSError):
    pass


# core data model
class NonFinite(ValidationError):
    pass


class DuplicateClass(ValidationError):
    pass


class EmptySet(ValidationError):
    pass


class DimTooSmall(ValidationError):
    pass


class DimMismatch(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class WrongStage(ValidationError):
    pass


class BadConfig(ValidationError):
    pass


# numerics
class DegenerateInput(ValidationError):
    pass


class ZeroVector(ValidationError):
    pass


class NotNormalized(ValidationError):
    pass


class ConstantMatrix(ValidationError):
    pass


class BadM(ValidationError):
    pass


class BadK(ValidationError):
    pass


# evaluation
class MissingLabels(ValidationError):
    pass


class ClassSetMismatch(ValidationError):
    pass


class UnknownSubject(ValidationError):
    pass


class WindowTooLarge(ValidationError):
    pass


class BadSpec(ValidationError):
    pass


# file formats
class BadMagic(FormatError):
    pass


class VersionUnsupported(FormatError):
    pass


class TruncatedPayload(FormatError):
    pass


class SidecarMismatch(FormatError):
    pass
