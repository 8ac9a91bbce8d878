"""Exception hierarchy shared across the toolkit."""


class StkitError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(StkitError, ValueError):
    pass


class ContractError(StkitError, ValueError):
    """A precondition of an operation was violated."""


class AudioFormatError(StkitError):
    pass


class UnsupportedAudioError(StkitError):
    pass


class TooShortError(StkitError, ValueError):
    pass


class RecordCorruptionError(StkitError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class RecordTruncationError(StkitError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class SchemaError(StkitError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class NoOverlapError(StkitError):
    pass


class CheckpointMismatchError(StkitError):
    pass


class ConfigError(StkitError):
    pass


class TrainingError(StkitError):
    pass
