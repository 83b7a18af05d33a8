"""
Custom exceptions for the retrieval adapter toolkit
"""
from typing import Optional


class RadaptError(Exception):
    """Base class for every error raised by the toolkit"""
    pass


class EmbeddingFormatError(RadaptError, ValueError):
    """Exception raised when an embedding file or set is malformed"""

    def __init__(self, message: str, row: Optional[int] = None):
        self.row = row
        super().__init__(f"row {row}: {message}" if row is not None else message)


class QrelsFormatError(RadaptError, ValueError):
    """Exception raised for malformed or inconsistent qrels"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class RunFormatError(RadaptError, ValueError):
    """Exception raised for malformed or unordered run files"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class TagFormatError(RadaptError, ValueError):
    """Exception raised for malformed task tag files"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class AdapterFormatError(RadaptError, ValueError):
    """Exception raised for invalid adapter matrices or adapter files"""
    pass


class DimensionMismatchError(RadaptError, ValueError):
    """Exception raised when vector or matrix shapes disagree"""
    pass


class StoreWriteError(RadaptError, OSError):
    """Exception raised when an artifact cannot be written"""
    pass


class ConfigError(RadaptError, ValueError):
    """Exception raised for invalid configuration values"""
    pass


class TrainingError(RadaptError):
    """Exception raised when a training stage cannot proceed"""
    pass


class NonFiniteGradientError(TrainingError):
    """Exception raised when an optimizer step receives NaN/Inf gradients"""
    pass


class MiningError(RadaptError, ValueError):
    """Exception raised when negatives cannot be mined for a query"""
    pass


class SplitError(RadaptError, ValueError):
    """Exception raised for invalid dataset splits"""
    pass


class MetricsError(RadaptError, ValueError):
    """Exception raised for invalid metric inputs"""
    pass


class SyntheticSpecError(RadaptError, ValueError):
    """Exception raised for degenerate synthetic dataset specifications"""
    pass
