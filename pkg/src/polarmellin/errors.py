"""Exception hierarchy shared by every module of the package."""


class PmtError(Exception):
    """Base class for all errors raised by polarmellin."""


class InvalidInputError(PmtError, ValueError):
    """An input grid or frame has the wrong shape, dtype or contents."""


class InvalidParamsError(PmtError, ValueError):
    """Transform or pipeline parameters violate their invariants."""


class NoMatchError(PmtError):
    """The correlation surface is flat, so no peak can be located."""


class InvalidScaleError(PmtError, ValueError):
    """Resampling by the requested scale leaves no usable pixels."""


class SourceError(PmtError):
    """A frame source could not read or decode one of its inputs."""


class SourceExhaustedError(PmtError):
    """The frame source ran dry before the requested frame count.

    The partial :class:`~polarmellin.pipeline.TimingReport` covering the
    frames that did complete is attached as ``report``.
    """

    def __init__(self, message, report=None, frames_completed=0):
        super().__init__(message)
        self.report = report
        self.frames_completed = frames_completed


class FormatError(PmtError, ValueError):
    """A PGM, F32 grid or LPTM file is malformed.

    ``offset`` is the byte position at which parsing failed.
    """

    def __init__(self, path, offset, reason):
        super().__init__(f"{path}: {reason} (byte offset {offset})")
        self.path = str(path)
        self.offset = offset
        self.reason = reason
