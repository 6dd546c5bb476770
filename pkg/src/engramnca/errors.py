"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
AssetError -> 3, NumericError -> 4.
"""


class EngramError(Exception):
    """Base class for all package errors."""


class LayoutError(EngramError):
    """Channel layout is inconsistent or does not match the data."""


class CoordinateError(EngramError):
    """A grid coordinate is out of bounds."""


class ShapeError(EngramError):
    """Tensor shapes are incompatible for the requested operation."""


class TapeError(EngramError):
    """Autodiff tape misuse (backward on detached tensor, double backward)."""


class ConfigError(EngramError):
    """Invalid run configuration or model/role mismatch."""


class CapacityError(EngramError):
    """Gene code space cannot hold the requested number of primitives."""


class AssetError(EngramError):
    """A required asset is missing or cannot be decoded."""


class PersistenceError(EngramError):
    """Checkpoint or metrics I/O failed."""


class CorruptionError(PersistenceError):
    """A checkpoint blob does not match its declared shape."""


class UnsupportedVersionError(PersistenceError):
    """Checkpoint format version has no loader."""


class NumericError(EngramError):
    """Non-finite values appeared where the contract forbids them."""


class FrozenParameterError(EngramError):
    """An optimizer step touched parameters that were declared frozen."""
