"""Exception hierarchy shared by every module of the package."""


class StructLQRError(Exception):
    """Base class for all errors raised by structlqr."""


class DimensionError(StructLQRError, ValueError):
    """Matrix or signal dimensions are inconsistent."""


class PatternViolationError(StructLQRError, ValueError):
    """A gain or direction has nonzero entries where the zero pattern forbids them."""


class DivergenceError(StructLQRError, FloatingPointError):
    """A simulation produced non-finite states.

    ``time`` holds the first sample time (seconds) at which a non-finite
    value appeared.
    """

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class UnstableGainError(StructLQRError):
    """The closed loop formed by a gain is not asymptotically stable."""


class SingularConstraintError(StructLQRError, ValueError):
    """A projection system is singular or inconsistent."""


class UnsupportedConfigurationError(StructLQRError, ValueError):
    """The data-driven path cannot handle the requested weights or sizes."""


class SynthesisError(StructLQRError):
    """The synthesis loop could not continue.

    ``last_record`` is the last accepted (stable) iteration record.
    """

    def __init__(self, message, last_record=None):
        super().__init__(message)
        self.last_record = last_record


class ConfigError(StructLQRError, ValueError):
    """A run configuration failed to parse or validate."""
