"""
Exception hierarchy for the Consistent-Point toolkit.
Each error carries the process exit code the CLI reports for it.
"""

from typing import Any, Dict, Optional


class ConsistentPointError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ConfigError(ConsistentPointError, ValueError):
    """Invalid configuration file or override flags."""

    exit_code = 2


class AssignmentError(ConsistentPointError, ValueError):
    """Matching precondition violated (more targets than proposals)."""

    exit_code = 2


class ContractViolation(ConsistentPointError, ValueError):
    """An operation was called outside its documented domain."""


class ShapeMismatchError(ConsistentPointError, ValueError):
    """Arrays that must be aligned have different shapes."""


class ArtifactIOError(ConsistentPointError, OSError):
    """Reading or writing a run artifact failed."""

    exit_code = 3


class DatasetFormatError(ArtifactIOError):
    """A dataset file could not be parsed."""

    def __init__(self, message: str, record: Optional[int] = None, offset: Optional[int] = None):
        self.record = record
        self.offset = offset
        location = []
        if record is not None:
            location.append(f"record {record}")
        if offset is not None:
            location.append(f"byte offset {offset}")
        suffix = f" ({', '.join(location)})" if location else ""
        super().__init__(f"{message}{suffix}")


class CheckpointError(ArtifactIOError):
    """A checkpoint file is corrupted or truncated."""


class FormatVersionError(ArtifactIOError):
    """An artifact was written by an incompatible format version."""

    def __init__(self, kind: str, found: int, expected: int):
        self.kind = kind
        self.found = found
        self.expected = expected
        super().__init__(f"{kind} format version {found} is not supported (expected {expected})")


class NonFiniteInputError(ConsistentPointError, ValueError):
    """Input arrays contain NaN or Inf."""

    exit_code = 4


class NumericalAbort(ConsistentPointError, ArithmeticError):
    """A training step produced a non-finite loss or gradient."""

    exit_code = 4

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        self.diagnostics = diagnostics or {}
        super().__init__(f"{message}: {self.diagnostics}")
