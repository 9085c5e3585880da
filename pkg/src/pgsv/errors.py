"""Exception types shared across the codec."""


class CodecError(Exception):
    """Base class for all pgsv errors."""


class ConfigError(CodecError, ValueError):
    """Invalid or inconsistent configuration."""


class ShapeMismatchError(CodecError, ValueError):
    """Array dimensions do not agree."""


class DegenerateCovarianceError(CodecError, ValueError):
    """Covariance is singular or has a nonpositive diagonal factor."""


class TrainingDivergedError(CodecError, RuntimeError):
    """Loss or gradients became non-finite during optimization."""


class DegenerateRangeError(CodecError, ValueError):
    """Min-max normalization over an all-equal sequence."""


class StreamFormatError(CodecError, ValueError):
    """Bad magic, version, or malformed container structure."""


class StreamTruncatedError(StreamFormatError):
    """Payload ends inside a requested layer chunk."""


class CorruptStreamError(StreamFormatError):
    """Decoded field is out of bounds (e.g. a VQ index past the codebook)."""
