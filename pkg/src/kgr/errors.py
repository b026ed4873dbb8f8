"""Exception hierarchy shared across the toolkit."""


class KgrError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(KgrError):
    """Invalid configuration: bad field values, incompatible options."""


class DataError(KgrError):
    """Unusable data: unreadable files, unknown identifiers, empty results."""


class PatternError(DataError):
    """Bad discovery pattern text.

    Parameters
    ----------
    message : str
        Human-readable description.
    position : int or None
        Character offset into the pattern text where the problem starts,
        when known.
    """

    def __init__(self, message, position=None):
        super().__init__(message)
        self.position = position


class NumericError(KgrError):
    """Numeric failure: non-finite loss or score during optimization."""


class TrainingDiverged(NumericError):
    """Training produced a non-finite loss.

    Carries the last finite state so callers can salvage it.
    """

    def __init__(self, message, last_state=None, epoch=None):
        super().__init__(message)
        self.last_state = last_state
        self.epoch = epoch
