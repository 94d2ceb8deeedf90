"""Exception hierarchy shared across the package."""


class TriageError(Exception):
    """Base class for all errors raised by this package."""


class DuplicateIdError(TriageError):
    """Two corpus entries share the same report id."""

    def __init__(self, report_id: str):
        super().__init__(f"duplicate report id: {report_id!r}")
        self.report_id = report_id


class PreconditionViolation(TriageError):
    """An operation was called on input that violates its precondition."""


class InvalidRange(TriageError):
    """A month or date range has its endpoints in the wrong order."""


class EmptyTrainingSet(TriageError):
    """Vocabulary construction needs at least one non-empty document."""


class DegenerateLabels(TriageError):
    """A discriminative classifier needs at least two distinct classes."""


class ShapeError(TriageError):
    """Feature/label collections disagree in length or dimension."""


class Unsupported(TriageError):
    """The model kind does not support the requested operation."""


class InsufficientData(TriageError):
    """Not enough samples to run the requested protocol."""


class EmptyEvaluation(TriageError):
    """Metrics were requested for an empty prediction set."""


class EmptyStudy(TriageError):
    """A window study has no feasible (test month, delta) cell."""


class OneSidedData(TriageError):
    """A before/after comparison has data on only one side."""


class InvalidInput(TriageError):
    """A numeric argument is outside its valid domain."""


class NothingToExplain(TriageError):
    """The report has no tokens left after preprocessing."""


class NoTrainingData(TriageError):
    """The training slice contains no usable closed reports."""


class ServiceUnavailable(TriageError):
    """No model artifact is currently loaded."""


class AssignmentImpossible(TriageError):
    """The report text carries no usable features; refusing to guess."""


class NotFound(TriageError):
    """No assignment record exists for the given report id."""


class Conflict(TriageError):
    """The operation would overwrite write-once state."""


class ArtifactFormatError(TriageError):
    """A model artifact file is corrupt or has an unsupported version."""
