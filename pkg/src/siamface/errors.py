"""Exception hierarchy shared by every siamface module."""


class SiamfaceError(Exception):
    pass


class InvalidArgument(SiamfaceError, ValueError):
    pass


class FormatError(SiamfaceError, ValueError):
    """A file or payload could not be decoded."""


class TraceError(SiamfaceError, RuntimeError):
    """backward() was called on a tensor that carries no forward trace."""


class NumericError(SiamfaceError, ArithmeticError):
    pass


class NoFaceError(InvalidArgument):
    pass


class Overloaded(SiamfaceError):
    """The work queue is at capacity. Callers may retry later."""

    retryable = True
