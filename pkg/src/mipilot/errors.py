"""Exception hierarchy.

Every error raised by the package derives from :class:`MipilotError`, so
callers (and the CLI) can catch one type and still report the specific
failure by class name.
"""


class MipilotError(Exception):
    """Base class for all package errors."""


# signal core
class ZeroSignal(MipilotError, ValueError):
    pass


class EmptyClass(MipilotError, ValueError):
    pass


class BandOutOfRange(MipilotError, ValueError):
    pass


class IndexOutOfRange(MipilotError, IndexError):
    pass


class WindowTooLong(MipilotError, ValueError):
    pass


class InvalidTrial(MipilotError, ValueError):
    pass


# csp
class RankDeficient(MipilotError, ValueError):
    pass


class BadM(MipilotError, ValueError):
    pass


class ChannelMismatch(MipilotError, ValueError):
    pass


class DegenerateVariance(MipilotError, ValueError):
    pass


# lda / svm
class DegenerateScatter(MipilotError, ValueError):
    pass


class DimMismatch(MipilotError, ValueError):
    pass


class SingleClass(MipilotError, ValueError):
    pass


class NoConvergence(MipilotError, RuntimeError):
    pass


# synth / pipeline / cli
class UnknownClass(MipilotError, KeyError):
    pass


class ModelMismatch(MipilotError, ValueError):
    pass


class SourceEnded(MipilotError):
    """Raised by a sample source once it has no more samples."""


class InvalidSpec(MipilotError, ValueError):
    pass


class FormatError(MipilotError, ValueError):
    """A session or model file does not follow its text format."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


# comlink
class UnmappedClass(MipilotError, KeyError):
    pass


class BadSync(MipilotError, ValueError):
    pass


class BadChecksum(MipilotError, ValueError):
    pass


class BadLength(MipilotError, ValueError):
    pass


class UnsupportedCommand(MipilotError, ValueError):
    pass
