"""Exception taxonomy shared across the package.

Each failure category used in operation contracts gets its own class so
callers (and the batch driver, which maps them to manifest status tags)
can tell them apart without string matching.
"""


class MorphAlignError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(MorphAlignError, ValueError):
    """An argument violates an operation's precondition."""


class FormatError(MorphAlignError, ValueError):
    """A text input (landmark file, manifest, config) failed to parse."""


class ImageIOError(MorphAlignError, OSError):
    """An image file could not be read, decoded, or written."""


class GeometryError(MorphAlignError, ValueError):
    """Image/landmark geometry is unusable (crop overruns, bad eye span)."""


class SizeRangeError(MorphAlignError, ValueError):
    """A size-targeting search cannot reach the requested window."""


class NumericalBreakdownError(MorphAlignError, ArithmeticError):
    """A solver encountered non-finite values; carries the iteration index."""

    def __init__(self, message: str, iteration: int):
        super().__init__(message)
        self.iteration = iteration
