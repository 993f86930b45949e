"""Exception types shared across the package."""

from __future__ import annotations


class GsEditError(Exception):
    """Base class for every error raised by this package."""


# --- geometry ---------------------------------------------------------------

class BehindCamera(GsEditError):
    """Point lies at or behind the camera near plane."""


# --- gaussian assets and rendering ------------------------------------------

class WrongFrame(GsEditError):
    """Cloud is tagged with the wrong coordinate frame for this operation."""


class MalformedPly(GsEditError):
    """PLY payload has a bad header, missing fields, or truncated data."""


class NonFiniteValue(GsEditError):
    """A NaN or infinity appeared where a finite value is required."""


class DegenerateGaussian(GsEditError):
    """Gaussian attributes are out of range after decoding."""


# --- scene layout -----------------------------------------------------------

class MissingCamera(GsEditError):
    """No camera registered for the requested (frame, camera_id)."""


class ObjectAbsent(GsEditError):
    """Object has no box in the requested frame."""


# --- editing ----------------------------------------------------------------

class UnknownObject(GsEditError):
    """Edit targets an object id that is not in the layout."""


class DuplicateObjectId(GsEditError):
    """Inserting would collide with an existing object id."""


class EmptyAsset(GsEditError):
    """Gaussian asset contains no gaussians."""


class DegenerateExtent(GsEditError):
    """Asset extent is too small to fit to a box."""


class MissingAsset(GsEditError):
    """No gaussian asset available for the edited object."""


class DimensionNotDivisible(GsEditError):
    """Image dimensions are not divisible by the latent downsampling factor."""


# --- data preparation -------------------------------------------------------

class ShapeMismatch(GsEditError):
    """Array shapes do not agree."""


class FullyBehindCamera(GsEditError):
    """Box has no corner in front of the near plane."""


class NotFullyVisible(GsEditError):
    """Object is not fully inside the image in this frame."""


class CropExceedsImage(GsEditError):
    """Requested square crop is larger than the image."""


class NoFreeRegion(GsEditError):
    """No object-free rectangle found within the attempt budget."""


# --- evaluation -------------------------------------------------------------

class DegenerateRange(GsEditError):
    """Ground-truth box is too close to the camera to define a line of sight."""


class NoGroundTruth(GsEditError):
    """Metrics requested but no ground-truth boxes exist."""


class NotVisible(GsEditError):
    """Box projects entirely outside the image."""


# --- file formats -----------------------------------------------------------

class SceneFormatError(GsEditError):
    """Scene JSON does not conform to the documented schema."""


class TensorFormatError(GsEditError):
    """Tensor file is malformed or its payload size is inconsistent."""


class DetectionFormatError(GsEditError):
    """Detection JSONL line does not conform to the documented schema."""
