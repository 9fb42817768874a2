"""Exception types raised across the package.

Everything derives from SfmotionError so callers can catch one base class;
parsers additionally tag errors with a byte offset or line number where the
input went wrong.
"""

from __future__ import annotations


class SfmotionError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(SfmotionError):
    """Malformed input bytes/text."""

    def __init__(self, message: str, *, offset: int | None = None,
                 line: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(message)
        self.offset = offset
        self.line = line


class SchemaError(SfmotionError):
    """Input parsed but a required field is missing or has the wrong shape."""


class EmptyInputError(SfmotionError):
    """Input contains no usable records (e.g. zero camera shots)."""


class UnsupportedFormatError(SfmotionError):
    """Recognized but unsupported dialect (e.g. binary PLY)."""


class DegenerateGeometryError(SfmotionError):
    """Geometric construction impossible (collinear samples, parallel normals)."""


class AliasingError(SfmotionError):
    """Per-interval rotation reached the log-map branch cut (angle >= pi)."""

    def __init__(self, message: str, interval: int):
        super().__init__(f"{message} (interval {interval})")
        self.interval = interval


class NoPeriodicityError(SfmotionError):
    """Signal has no usable periodic component to fit."""


class SimulationError(SfmotionError):
    """Integration produced non-finite state."""


class ConfigError(SfmotionError):
    """Pipeline configuration invalid."""


class PipelineError(SfmotionError):
    """A pipeline stage failed; names the stage and the cause."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}': {cause}")
        self.stage = stage
        self.cause = cause
