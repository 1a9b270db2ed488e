class SoundBounceError(Exception):
    """Base class for all errors raised by soundbounce"""


class RejectedInputError(SoundBounceError, ValueError):
    """An argument violates an operation's precondition"""


class InsufficientObservationError(RejectedInputError):
    """Too few bounces to build the requested observation"""


class HeadingUndefinedError(RejectedInputError):
    """Two bounces coincide, so the direction of travel is unknown"""


class ConfigError(SoundBounceError, ValueError):
    """A configuration field failed validation"""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class TrajectoryTerminated(SoundBounceError):
    """The ball never returns to the surface"""


class TrainingDivergedError(SoundBounceError, RuntimeError):
    """The training loss became NaN or infinite"""

    def __init__(self, epoch: int, message: str = "training loss is not finite"):
        super().__init__(f"epoch {epoch}: {message}")
        self.epoch = epoch


class NoSignalError(SoundBounceError):
    """An audio window carries no usable signal"""


class NoDetection(SoundBounceError):
    """No complete onset in the current buffer; wait for the next one"""


class LocalizationFailedError(SoundBounceError):
    """The conic intersection solve did not converge"""

    def __init__(self, residual: float, message: str = "localization did not converge"):
        super().__init__(f"{message} (residual {residual:.3e} m)")
        self.residual = residual
