"""Exception and warning types shared across the package."""


class AquaAugError(Exception):
    """Base class for all package errors."""


class WrongDepth(AquaAugError):
    """Raised when an operation receives an image of the wrong sample depth."""


class DegenerateSpectrum(AquaAugError):
    """Raised when a spectral table integrates to (near) zero transmitted power."""


class RadiusOverflow(AquaAugError):
    """Raised when a convolution kernel would exceed the hard radius cap."""


class ShapeMismatch(AquaAugError):
    """Raised when tensor dimensions violate a divisibility or layout contract."""


class OrphanLabel(AquaAugError):
    """Raised when a label file has no image with the same stem."""


class MalformedLine(AquaAugError):
    """Raised on an unparseable or out-of-range label line; carries file and line number."""

    def __init__(self, path, lineno, reason):
        super().__init__(f"{path}:{lineno}: {reason}")
        self.path = path
        self.lineno = lineno
        self.reason = reason


class UnreadableImage(AquaAugError):
    """Raised when an image file cannot be decoded."""


class IoFailure(AquaAugError):
    """Raised when dataset output cannot be written."""


class StageFailure(AquaAugError):
    """A pipeline stage failed for one image; the run skips it and continues."""

    def __init__(self, image_id, stage, cause):
        super().__init__(f"stage '{stage}' failed for image '{image_id}': {cause}")
        self.image_id = image_id
        self.stage = stage
        self.cause = cause


class DegenerateImage(UserWarning):
    """Warning category for boxes that collapse to zero area and get dropped."""
