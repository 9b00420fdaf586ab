"""Exception hierarchy shared by every stage of the toolkit."""


class MoireError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(MoireError, ValueError):
    """Bad input caught before any work is done."""


class PipelineError(MoireError, RuntimeError):
    """A processing stage could not produce a result."""


# optics
class EqualPeriods(ValidationError):
    pass


class NonPositiveDistance(ValidationError):
    pass


class NonPositiveInput(ValidationError):
    pass


# geometry
class BehindCamera(PipelineError):
    pass


class DegenerateConfiguration(PipelineError):
    pass


class RankDeficient(PipelineError):
    pass


class DegenerateQuad(PipelineError):
    pass


class NoConvergence(PipelineError):
    pass


# simulator
class VisibilityUnsatisfiable(PipelineError):
    pass


class MissingDonor(ValidationError):
    pass


class IncompatibleGrating(ValidationError):
    pass


# fringe signal
class EmptyImage(ValidationError):
    pass


class NoDominantPeak(PipelineError):
    pass


class OrientationOutOfRange(ValidationError):
    pass


class BinOutOfRange(ValidationError):
    pass


class NonFiniteInput(ValidationError):
    pass


class TooShort(ValidationError):
    pass


# verifier
class MarkersNotFound(PipelineError):
    pass


class AmbiguousLayout(PipelineError):
    pass


class DegenerateVariance(PipelineError):
    pass


class TracesTooShort(ValidationError):
    pass


class MissingManifest(ValidationError):
    pass


# evaluator
class MissingLabel(ValidationError):
    pass


class SingleClassOnly(ValidationError):
    pass


class EmptyMetrics(ValidationError):
    pass


class InsufficientSamples(ValidationError):
    pass


# io
class SchemaViolation(ValidationError):
    """Document does not match its schema; ``path`` names the offending field."""

    def __init__(self, message, path=""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
