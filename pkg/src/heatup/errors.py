"""Exception types shared across the package."""


class HeatupError(Exception):
    pass


class ShapeError(HeatupError, ValueError):
    pass


class DegenerateInputError(HeatupError, ValueError):
    """Raised when a row has (near) zero norm and cannot be normalized."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class StateError(HeatupError, RuntimeError):
    """Raised when a backward pass is requested without a matching forward."""


class GenerationError(HeatupError, RuntimeError):
    pass


class CheckpointError(HeatupError):
    pass


class CheckpointFormatError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointChecksumError(CheckpointError):
    pass


class IdxParseError(HeatupError, ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class IdxMagicError(IdxParseError):
    pass


class IdxTruncatedError(IdxParseError):
    pass


class IdxCountMismatchError(IdxParseError):
    pass
