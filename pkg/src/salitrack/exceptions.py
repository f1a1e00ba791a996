"""Exception hierarchy shared by all salitrack modules."""


class SalitrackError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(SalitrackError, ValueError):
    """Invalid layer shapes, topology or run configuration."""


class NumericError(SalitrackError, ArithmeticError):
    """A computation produced non-finite values."""


class TrainingError(NumericError):
    """Training or fine-tuning diverged.

    Attributes
    ----------
    iteration : int
        Zero-based iteration at which the loss became non-finite.
    """

    def __init__(self, message, iteration):
        super().__init__(message)
        self.iteration = iteration


class UsageError(SalitrackError, RuntimeError):
    """An API was called out of order, e.g. backward before forward."""


class DegenerateRegionError(SalitrackError, ValueError):
    """A region rectangle collapsed to zero area after clipping."""

    def __init__(self, message, specs=()):
        super().__init__(message)
        self.specs = list(specs)


class EmptyMaskError(SalitrackError, ValueError):
    """Thresholding a saliency map produced no foreground."""


class InitializationError(SalitrackError):
    """The tracker could not build a first-frame target mask."""


class TargetLostError(SalitrackError):
    """Localization produced an empty mask.

    The last valid tracker state travels with the exception so callers can
    keep tracking from it.
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class ImageReadError(SalitrackError, OSError):
    """An image or mask file could not be decoded."""

    def __init__(self, path, reason):
        super().__init__(f"{path}: {reason}")
        self.path = str(path)
        self.reason = reason
