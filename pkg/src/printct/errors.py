"""Exception types shared across the toolkit.

The CLI maps these onto distinct exit codes: configuration problems,
stage failures inside a pipeline run, and file I/O problems.
"""


class PrintCTError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(PrintCTError):
    """Bad configuration: unknown profile, unresolved name, invalid value."""


class ScheduleError(PrintCTError):
    """A void schedule cannot meet the requested porosity inside the body."""


class ResolutionError(PrintCTError):
    """Voxel pitch too coarse for the requested feature or layer height."""


class GeometryError(PrintCTError):
    """Scan geometry inconsistent with the data (span, shape mismatch)."""


class SegmentationError(PrintCTError):
    """Degenerate histogram or empty sample during segmentation/metrics."""


class RegistrationError(PrintCTError):
    """Label volumes cannot be registered (dim mismatch, zero overlap)."""


class IngestError(PrintCTError):
    """A slice stack or volume file cannot be read; names the offender."""


class StageError(PrintCTError):
    """Wraps any failure inside a pipeline stage with the stage name."""

    def __init__(self, stage: str, analysis: str, cause: BaseException):
        self.stage = stage
        self.analysis = analysis
        self.cause = cause
        super().__init__(f"stage '{stage}' failed for {analysis}: {cause}")
