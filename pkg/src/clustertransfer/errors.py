"""Exception hierarchy shared by every module of the package."""


class ClusterTransferError(Exception):
    """Base class for all errors raised by clustertransfer."""


class ParseError(ClusterTransferError):
    """Malformed CSV input."""


class SchemaError(ClusterTransferError):
    """Column layout does not satisfy what an operation needs."""


class EncodingError(ClusterTransferError):
    """A categorical value was not seen when the schema was fitted."""


class ShapeError(ClusterTransferError, ValueError):
    """Array dimensions do not line up."""


class NumericError(ClusterTransferError, ArithmeticError):
    """A computation produced non-finite values or failed to converge."""


class FormatError(ClusterTransferError):
    """A serialized model or config file is corrupt or has the wrong version."""


class ConfigError(ClusterTransferError):
    """Invalid experiment configuration. ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class UndefinedMetricError(ClusterTransferError, ValueError):
    """The metric has no value for the given input (e.g. R^2 on constant targets)."""
