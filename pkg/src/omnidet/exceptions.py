"""Custom exceptions for the omni-supervised detection library."""

from typing import Any


class OmniDetectionError(Exception):
    """Base exception for all library errors."""

    pass


class ParseError(OmniDetectionError):
    """Raised when parsing a config, manifest or detections file fails."""

    def __init__(self, reason: str, source: str | None = None) -> None:
        self.reason = reason
        self.source = source
        msg = f"Failed to parse: {reason}"
        if source:
            msg += f" (source: {source})"
        super().__init__(msg)


class ConfigError(OmniDetectionError):
    """Raised when a configuration value or override is invalid."""

    def __init__(self, key: str, reason: str) -> None:
        self.key = key
        self.reason = reason
        super().__init__(f"Invalid configuration for '{key}': {reason}")


class ShapeMismatchError(OmniDetectionError):
    """Raised when tensors passed to an operation have incompatible shapes."""

    def __init__(self, operation: str, expected: Any, actual: Any) -> None:
        self.operation = operation
        self.expected = expected
        self.actual = actual
        super().__init__(
            f"Shape mismatch in {operation}: expected {expected}, got {actual}"
        )


class GranularityError(OmniDetectionError):
    """Raised when an operation receives a sample of a non-qualifying granularity."""

    def __init__(self, operation: str, granularity: str) -> None:
        self.operation = operation
        self.granularity = granularity
        super().__init__(
            f"Operation '{operation}' cannot be applied to {granularity} samples"
        )


class DatasetError(OmniDetectionError):
    """Raised when a dataset operation fails."""

    pass


class LabelLeakageError(DatasetError):
    """Raised when hidden ground truth is read outside of evaluation."""

    def __init__(self, sample_id: str) -> None:
        self.sample_id = sample_id
        super().__init__(
            f"Hidden annotations of sample '{sample_id}' read without evaluation access"
        )


class CheckpointError(OmniDetectionError):
    """Raised when a checkpoint cannot be written or restored."""

    def __init__(self, path: str, reason: str) -> None:
        self.path = path
        self.reason = reason
        super().__init__(f"Checkpoint error for '{path}': {reason}")


class ConfigMismatchError(CheckpointError):
    """Raised when a checkpoint was produced under a different configuration."""

    def __init__(self, path: str, field: str, saved: Any, current: Any) -> None:
        self.field = field
        self.saved = saved
        self.current = current
        super().__init__(
            path,
            f"config field '{field}' differs (checkpoint: {saved!r}, current: {current!r})",
        )


class UnknownClassError(OmniDetectionError):
    """Raised when a class id falls outside [0, num_classes)."""

    def __init__(self, class_id: int, num_classes: int) -> None:
        self.class_id = class_id
        self.num_classes = num_classes
        super().__init__(f"Unknown class id {class_id} (num_classes={num_classes})")
