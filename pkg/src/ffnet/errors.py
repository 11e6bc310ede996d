"""Exception types raised by the engine."""


class FFNetError(Exception):
    """Base class for engine errors."""


class ShapeError(FFNetError, ValueError):
    """Tensor shapes disagree or a layer would produce an empty extent."""


class SizeError(FFNetError, ValueError):
    """Requested tensor extent is zero, negative, or overflows the index range."""


class RangeError(FFNetError, IndexError):
    """A window or index lies outside the tensor bounds."""


class LabelError(FFNetError, ValueError):
    """Class label outside ``[0, classes)``."""


class FormatError(FFNetError, ValueError):
    """Malformed binary file (checkpoint or dataset records)."""


class IncompatibleSpecError(FFNetError, ValueError):
    """Checkpoint was written for a different network architecture."""


class GradientError(FFNetError, RuntimeError):
    """Missing or non-finite gradients."""
