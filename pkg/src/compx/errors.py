"""Typed error hierarchy shared by all compx modules.

Every error carries a stable machine-readable ``code`` (its class name) so
the CLI and HTTP service can report failures uniformly.
"""


class CompxError(Exception):
    """Base class for all domain errors raised by this package."""

    @property
    def code(self) -> str:
        return type(self).__name__


# --- imaging ---------------------------------------------------------------

class NotFound(CompxError):
    pass


class UnsupportedFormat(CompxError):
    pass


class CorruptFile(CompxError):
    pass


class IoError(CompxError):
    pass


class ChannelMismatch(CompxError):
    pass


# --- codec / masks ---------------------------------------------------------

class OutOfRange(CompxError):
    pass


class DimensionMismatch(CompxError):
    pass


class UnknownGroup(CompxError):
    pass


class CorruptSegment(CompxError):
    pass


class RangeViolation(CompxError):
    pass


# --- container -------------------------------------------------------------

class ContainerError(CompxError):
    """Base for container parse/serialize failures."""


class InvariantViolation(ContainerError):
    # also raised by plan.normalize on schema invariant breaks
    pass


class BadMagic(ContainerError):
    pass


class UnsupportedVersion(ContainerError):
    pass


class Truncated(ContainerError):
    pass


class InconsistentHeader(ContainerError):
    pass


class EmptySelection(ContainerError):
    pass


# --- metrics ---------------------------------------------------------------

class NonBinaryMask(CompxError):
    pass


class EmptyRegion(CompxError):
    pass


class ZeroDims(CompxError):
    pass


class NoOverlap(CompxError):
    pass


class DegenerateCurve(CompxError):
    pass


# --- plan ------------------------------------------------------------------

class PlanError(CompxError):
    """Base for request-plan parse/validation failures."""


class NoJsonFound(PlanError):
    pass


class UnknownField(PlanError):
    pass


class InvalidEnum(PlanError):
    pass


class RatioSumViolation(PlanError):
    pass


class NonPositive(PlanError):
    pass


class MissingRuns(PlanError):
    pass


# --- prompts ---------------------------------------------------------------

class MissingFile(CompxError):
    pass


class InvalidTranscript(CompxError):
    pass


class EmptyHistory(CompxError):
    pass


# --- llm client ------------------------------------------------------------

class AuthMissing(CompxError):
    pass


class HttpError(CompxError):
    pass


class EmptyCompletion(CompxError):
    pass


class ScriptExhausted(CompxError):
    pass


# --- agent -----------------------------------------------------------------

class SegmentationRequired(CompxError):
    pass


class LabelNotFound(CompxError):
    pass


class NoWindow(CompxError):
    pass


class NoProposalFound(CompxError):
    pass


class PlanningFailed(CompxError):
    pass


# --- bench -----------------------------------------------------------------

class DuplicateId(CompxError):
    pass


class BadDifficulty(CompxError):
    pass


class LabelParseError(CompxError):
    pass


class CurveNonMonotone(CompxError):
    pass
