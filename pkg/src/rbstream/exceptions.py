"""Exception hierarchy shared by all rbstream modules."""


class RBStreamError(Exception):
    """Base class for every error raised by this package."""


class NonPositiveExtent(RBStreamError, ValueError):
    """A rotated box was given a width or height that is not strictly positive."""


class DegenerateContour(RBStreamError, ValueError):
    """Fewer than three distinct points, or all points collinear."""


class CellMismatch(RBStreamError, ValueError):
    """A ground-truth center lies outside the grid cell it is encoded against."""


class OutOfImage(RBStreamError, ValueError):
    """A ground-truth center lies outside the image."""


class AssignmentConflict(RBStreamError, ValueError):
    """No free anchor slot remains for a ground-truth box."""


class ProbabilityOutOfRange(RBStreamError, ValueError):
    """A probability argument is outside the open interval (0, 1)."""


class ShapeMismatch(RBStreamError, ValueError):
    """Array shapes are inconsistent with each other or with the weights."""


class EmptyGroundTruth(RBStreamError, ValueError):
    """Average precision is undefined when there are no ground-truth boxes."""


class SequenceMismatch(RBStreamError, ValueError):
    """A detection frame refers to a sequence absent from the ground truth."""


class ParseError(RBStreamError, ValueError):
    """Malformed input file content.

    Parameters
    ----------
    message : str
        What went wrong.
    line : int, optional
        1-based line number in the offending file.
    source : str, optional
        File name or other description of the input.
    """

    def __init__(self, message, line=None, source=None):
        self.message = message
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
