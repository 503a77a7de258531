"""Exception hierarchy.

Every error class carries the CLI exit code used when it escapes a command,
so the command-line front end can map failures without a lookup table of its
own.
"""


class FetalFaceError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class FormatError(FetalFaceError):
    """A file does not follow its documented format."""

    exit_code = 3


class SizeMismatchError(FormatError):
    """MetaImage header and raw payload disagree on the sample count."""


class UnsupportedFormatError(FormatError):
    """Valid file, but a feature we do not read (element type, channels...)."""


class ModelFormatError(FormatError):
    """Morphable model arrays are inconsistent or violate model invariants."""


class InsufficientLandmarksError(FetalFaceError):
    """A plane (or the completion step) lacks enough usable landmarks."""

    exit_code = 4

    def __init__(self, message, planes=()):
        super().__init__(message)
        self.planes = tuple(planes)


class DegenerateInputError(FetalFaceError):
    """Input is numerically degenerate (constant volume, collinear points...)."""

    exit_code = 5


class SingularSystemError(DegenerateInputError):
    """A linear system has no unique solution."""


class EmptySegmentationError(DegenerateInputError):
    """A mask holds no foreground voxel."""


class FitFailureError(FetalFaceError):
    """The plane optimizer did not converge from any start.

    ``best`` holds the best partial result (a ``PlaneTriple``) when one exists.
    """

    exit_code = 6

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class OrientationUndeterminedError(FetalFaceError):
    """No orientation landmark is visible for a plane."""

    exit_code = 7

    def __init__(self, message, plane=None):
        super().__init__(message)
        self.plane = plane


class InvariantViolationError(FetalFaceError, ValueError):
    """A value breaks a documented invariant (e.g. a non-rotation matrix)."""

    exit_code = 5


class CorruptionError(FetalFaceError):
    """Landmark corruption would leave a plane under-determined."""

    exit_code = 4


class SizeError(FetalFaceError, ValueError):
    """Volume dimensions outside what an operation supports."""

    exit_code = 3
