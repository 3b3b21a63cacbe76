"""Exception types raised by the tumorpatch pipeline."""


class TumorPatchError(Exception):
    """Base class for all library errors."""


class VolumeLoadError(TumorPatchError):
    """A volume file is missing, malformed, or inconsistent with its header."""


class DegenerateInputError(TumorPatchError, ValueError):
    """Input carries no usable signal (constant volume, single-bin histogram)."""


class EmptyMaskError(TumorPatchError, ValueError):
    """A binary mask required to be non-empty contains no true voxels."""


class EmptySelectionError(TumorPatchError, ValueError):
    """No persistence pair / component is available to anchor a selection."""


class UndefinedMetricError(TumorPatchError, ZeroDivisionError):
    """A metric denominator is zero; returning 0 would corrupt corpus averages."""
