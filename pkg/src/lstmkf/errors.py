"""Exception types shared across the package."""

from __future__ import annotations


class ShapeMismatchError(ValueError):
    """Operands or containers with incompatible shapes."""


class SingularMatrixError(ArithmeticError):
    """Symmetric factorization hit a non-positive or vanishing pivot."""

    def __init__(self, pivot_index: int, pivot_value: float):
        super().__init__(
            f"symmetric factorization failed at pivot {pivot_index} "
            f"(value {pivot_value:.6e})"
        )
        self.pivot_index = pivot_index
        self.pivot_value = pivot_value


class NonFiniteOutputError(FloatingPointError):
    """A network emitted a NaN or infinite component."""

    def __init__(self, component: int, context: str = "network output"):
        super().__init__(f"non-finite value in {context}, component {component}")
        self.component = component


class FilterStepError(RuntimeError):
    """Filtering failed at a specific time step; the cause is chained."""

    def __init__(self, step: int):
        super().__init__(f"filter failed at step {step}")
        self.step = step


class TrainingDivergedError(RuntimeError):
    """Training hit a non-finite loss."""

    def __init__(self, epoch: int, batch: int):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


class DatasetFormatError(ValueError):
    """A dataset file failed to parse or validate."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class ConfigError(ValueError):
    """Unknown, missing, or malformed configuration entries."""
