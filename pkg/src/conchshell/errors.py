"""Exception hierarchy shared by every stage of the pipeline.

The CLI maps these onto its exit codes, so raise the most specific one.
"""


class ConchShellError(Exception):
    """Base class for all package errors."""


class DataError(ConchShellError):
    """Bad, missing or inconsistent input data (exit code 2)."""


class NumericError(ConchShellError, FloatingPointError):
    """Non-finite values in a loss or score (exit code 3)."""


class CheckpointError(DataError):
    """Unreadable, corrupted or incompatible checkpoint file."""


class ConfigError(ConchShellError):
    """Invalid run configuration (exit code 1)."""
