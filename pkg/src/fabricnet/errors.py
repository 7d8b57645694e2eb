"""Exception hierarchy for the package.

The CLI maps each error family to a distinct exit code (config=2, data=3,
numeric=4, io=5), so new exceptions should subclass the family they belong to.
"""


class FabricnetError(Exception):
    """Base class for every error this package raises on purpose."""


class ConfigError(FabricnetError):
    """Invalid configuration: flag values, config documents, hyperparameters."""


class DataError(FabricnetError):
    """Invalid dataset content: labels, manifests, image payloads, empty sets."""


class NumericError(FabricnetError):
    """Numeric-structure problems in tensor and model operations."""


class DimensionError(NumericError):
    """Tensor axes do not line up for the requested operation."""


class GeometryError(NumericError):
    """Convolution/pooling geometry yields no valid integer output grid."""


class StaleTapeError(NumericError):
    """backward() given a tape recorded against different parameters."""


class StorageError(FabricnetError):
    """I/O-level failures and files that fail structural checks."""


class CheckpointError(StorageError):
    """Base for checkpoint file problems."""


class CheckpointFormatError(CheckpointError):
    """Bad magic bytes or malformed structure."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint written with an unsupported format version."""


class CheckpointDigestError(CheckpointError):
    """Stored CRC does not match the file contents."""


class CheckpointTruncatedError(CheckpointError):
    """File ends before the declared payload does."""


class CheckpointSpecMismatchError(CheckpointError):
    """Checkpoint was saved for a different model spec than requested."""
