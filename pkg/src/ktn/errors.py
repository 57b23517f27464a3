"""Exception hierarchy shared by all ktn modules."""


class KtnError(Exception):
    """Base class for every error raised by ktn."""


class SizeMismatch(KtnError, ValueError):
    pass


class BadPermutation(KtnError, ValueError):
    pass


class SpecMismatch(KtnError, ValueError):
    pass


class NoConvergence(KtnError, RuntimeError):
    pass


class BadRank(KtnError, ValueError):
    pass


class NonIntegralGeometry(KtnError, ValueError):
    pass


class NonPositiveOutput(KtnError, ValueError):
    pass


class ChannelMismatch(KtnError, ValueError):
    pass


class SingularUpdate(KtnError, RuntimeError):
    pass


class ZeroSpectrum(KtnError, ValueError):
    pass


class DivergenceDetected(KtnError, RuntimeError):
    pass


class ShapeInconsistency(KtnError, ValueError):
    pass


class FormatError(KtnError, ValueError):
    """Malformed model file. ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class BadMagic(FormatError):
    pass


class UnsupportedVersion(FormatError):
    pass


class TruncatedFile(FormatError):
    pass


class BadRecordSize(KtnError, ValueError):
    pass


class BadLabel(KtnError, ValueError):
    pass
