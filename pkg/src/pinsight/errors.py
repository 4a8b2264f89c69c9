"""Exception hierarchy for the pinsight pipeline.

Every stage raises a subclass of :class:`PinsightError`; the CLI maps these to
exit code 1 with a categorized message.
"""


class PinsightError(Exception):
    """Base class for all pipeline errors."""


# --- ingest ---------------------------------------------------------------

class MalformedKeylog(PinsightError):
    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class EmptyFile(PinsightError):
    pass


class MissingCompanionFile(PinsightError):
    pass


class DuplicateRecordingId(PinsightError):
    pass


# --- audio ----------------------------------------------------------------

class NoPeaksFound(PinsightError):
    pass


class NegativeFrame(PinsightError):
    pass


class AlignmentFailed(PinsightError):
    pass


# --- video ----------------------------------------------------------------

class CropOutOfBounds(PinsightError):
    pass


class InvalidNeighborhood(PinsightError):
    pass


class UnknownCoverage(PinsightError):
    pass


# --- model ----------------------------------------------------------------

class InvalidConfig(PinsightError):
    pass


class MissingClass(PinsightError):
    pass


class EmptySplit(PinsightError):
    pass


class ShapeMismatch(PinsightError):
    pass


# --- rank -----------------------------------------------------------------

class LengthMismatch(PinsightError):
    pass


# --- eval -----------------------------------------------------------------

class InsufficientParticipants(PinsightError):
    pass


class EmptySubset(PinsightError):
    pass
