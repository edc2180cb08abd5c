"""Exception hierarchy shared by all simulator modules."""


class BiosensorError(Exception):
    """Base class for simulator errors."""


class InvalidArgumentError(BiosensorError, ValueError):
    """An argument violates an operation precondition or a physical bound."""


class StateError(BiosensorError, RuntimeError):
    """An operation was invoked on an object in the wrong state (e.g. uncalibrated)."""


class EncodingError(BiosensorError, ValueError):
    """A value cannot be represented in a wire/file format."""


class DecodeError(BiosensorError, ValueError):
    """Base class for malformed binary input."""


class FrameLengthError(DecodeError):
    pass


class FrameMagicError(DecodeError):
    pass


class FrameTypeError(DecodeError):
    pass


class FrameCRCError(DecodeError):
    pass


class InputFileError(BiosensorError):
    """A text input file is missing or cannot be parsed.

    ``path`` and ``line`` (1-based, or None when the whole file is at fault)
    are kept so front ends can name the culprit.
    """

    def __init__(self, path, message, line=None):
        self.path = str(path)
        self.line = line
        self.message = message
        where = self.path if line is None else f"{self.path}:{line}"
        super().__init__(f"{where}: {message}")
