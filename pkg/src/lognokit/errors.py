"""Exception hierarchy shared by all lognokit modules."""


class LognokitError(Exception):
    """Base class for every error raised by this package."""


class RowError(LognokitError, ValueError):
    """An error tied to a 1-based data row of a CSV document."""

    def __init__(self, row, message=""):
        self.row = row
        super().__init__(f"row {row}: {message}" if message else f"row {row}")


# ingestion
class MalformedHeader(LognokitError, ValueError):
    pass


class MalformedRow(RowError):
    pass


class NonFiniteValue(RowError):
    pass


class NonMonotonicTime(RowError):
    pass


class TooFewSamples(LognokitError, ValueError):
    pass


class InsufficientOverlap(LognokitError, ValueError):
    pass


class FlatSignal(LognokitError, ValueError):
    pass


# preprocessing / segmentation
class InvalidCutoff(LognokitError, ValueError):
    pass


class WindowLongerThanLog(LognokitError, ValueError):
    pass


# classification
class SegmentTooShort(LognokitError, ValueError):
    pass


class DegenerateDataset(LognokitError, ValueError):
    pass


class NoConvergence(LognokitError, RuntimeError):
    pass


class DimensionMismatch(LognokitError, ValueError):
    pass


class TooFewExamplesPerClass(LognokitError, ValueError):
    pass


# kinematic model
class NoPeak(LognokitError, ValueError):
    pass


class IllConditioned(LognokitError, ValueError):
    pass


class DegenerateInput(LognokitError, ValueError):
    pass


class ZeroSignal(LognokitError, ValueError):
    pass


# reporting
class TooFewReports(LognokitError, ValueError):
    pass


class EmptySample(LognokitError, ValueError):
    pass


class InvalidConfig(LognokitError, ValueError):
    pass


class PipelineError(LognokitError):
    """Aggregated failures from a pipeline run.

    ``problems`` holds one human-readable message per failure, each prefixed
    with the file (and row, where known) it came from.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("\n".join(self.problems))
