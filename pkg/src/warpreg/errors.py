"""Exception types shared across the package."""


class WarpregError(Exception):
    """Base class for all package errors."""


class DimensionError(WarpregError):
    """Array or point dimensions incompatible with the operation."""


class ConfigError(WarpregError):
    """Invalid or incomplete training configuration."""


class FormatError(WarpregError):
    """Malformed input file."""


class BadMagicError(FormatError):
    """File does not start with the expected magic bytes."""


class TruncatedFileError(FormatError):
    """File ends before the declared payload is complete."""


class MeshTopologyError(WarpregError):
    """Mesh is open or non-manifold where a closed surface is required."""


class DegenerateGeometryError(WarpregError):
    """Geometric construction undefined for this input (e.g. apex-aligned normal)."""


class NumericalAbort(WarpregError):
    """Training produced a non-finite loss or gradient."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration
