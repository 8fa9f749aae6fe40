"""
Error types for the mobility response engine.

DataError and its subclasses map to CLI exit code 1, ConfigError to exit
code 2. Computation errors are raised by the pure analysis functions and
are usually caught by the pipeline and turned into exclusion records.
"""


class MobilityResponseError(Exception):
    """Base class for all errors raised by this package"""


class DataError(MobilityResponseError):
    """Input data violates a documented bound or contract"""


class FormatError(DataError):
    """Input file does not have the documented layout"""


class InsufficientDataError(DataError):
    """Too few observations to compute a result"""


class UnknownCountryError(DataError):
    """A requested country code is not present in the dataset"""


class ConfigError(MobilityResponseError):
    """Run configuration is invalid"""


class UndefinedMeasureError(MobilityResponseError, ValueError):
    """A similarity or correlation is undefined for the given inputs (zero norm, zero variance, short overlap)"""


class DimensionMismatchError(MobilityResponseError, ValueError):
    """Vectors in one analysis do not share a dimension or measure"""


class LabelMismatchError(MobilityResponseError, ValueError):
    """Two labeled matrices do not cover the same countries"""


class EmptyGeometryError(MobilityResponseError, ValueError):
    """A boundary geometry has no vertices"""


class DegenerateEmbeddingError(MobilityResponseError, ValueError):
    """The distance matrix cannot be embedded in the requested dimensions"""
