"""Exception hierarchy.

Every error carries a ``category`` used by the command line to print a
categorized error line and pick an exit code.
"""


class PairTopKError(Exception):
    category = "error"


class ConfigError(PairTopKError, ValueError):
    category = "config"


class DimensionError(PairTopKError, ValueError):
    category = "shape"


class NumericError(PairTopKError, ArithmeticError):
    category = "numeric"


class EmptySupportError(PairTopKError, ValueError):
    category = "support"


class StateError(PairTopKError, RuntimeError):
    category = "state"


class DataError(PairTopKError, ValueError):
    category = "data"


class ParseError(DataError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class AlignmentError(DataError):
    category = "alignment"


class WindowTooSmallError(DataError):
    category = "window"


class InvalidPairError(DataError):
    category = "pair"


class MaskError(DataError):
    category = "mask"


class LengthError(DataError):
    category = "length"


class TrainingError(PairTopKError, RuntimeError):
    category = "training"


class CompatibilityError(PairTopKError, ValueError):
    category = "compatibility"


class ComparabilityError(PairTopKError, ValueError):
    category = "comparability"


class JoinError(DataError):
    category = "join"
