"""Exception types raised across the package."""


class SeizedgeError(Exception):
    """Base class for all package errors."""


class AccumulatorOverflow(SeizedgeError):
    """Exact integer dot product exceeded the 32-bit signed accumulator range."""


class DimensionMismatch(SeizedgeError):
    """Tensor shapes inconsistent with a layer or model contract."""


class UnsupportedFamily(SeizedgeError):
    """Operation not available for the given model family."""


class BadMagic(SeizedgeError):
    """Weight file does not start with the expected magic bytes."""


class UnsupportedVersion(SeizedgeError):
    """Weight file version not understood by this reader."""


class ShapeMismatch(SeizedgeError):
    """Weight file tensor dimensions disagree with the declared architecture."""


class TruncatedFile(SeizedgeError):
    """Weight file ended before the declared payload was complete."""


class ChecksumMismatch(SeizedgeError):
    """Weight file CRC32 does not match its contents."""


class BadHeader(SeizedgeError):
    """Recording meta file is malformed or missing required fields."""


class ChannelCountMismatch(SeizedgeError):
    """Signal payload size disagrees with the declared channel count and duration."""


class OverlappingAnnotations(SeizedgeError):
    """Seizure annotation intervals overlap or are otherwise invalid."""
