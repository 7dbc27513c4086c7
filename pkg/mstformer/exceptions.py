"""Exception hierarchy shared by the CLI, the trainer and the HTTP service."""
from typing import Optional


class MSTFormerError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigurationError(MSTFormerError, ValueError):
    """Invalid or inconsistent configuration (hyperparameters, shapes, files)."""

    exit_code = 2


class ContractError(MSTFormerError, ValueError):
    """A caller violated an operation's precondition."""

    exit_code = 2


class DimensionError(ContractError):
    """Tensor shapes do not agree for an operation."""

    def __init__(self, op: str, *shapes: tuple):
        self.op = op
        self.shapes = shapes
        rendered = " and ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {rendered}")


class ShapeMismatchError(ConfigurationError):
    """A stored parameter does not match the shape the config requires."""

    def __init__(self, name: str, expected: Optional[tuple], found: Optional[tuple]):
        self.name = name
        self.expected = expected
        self.found = found
        if expected is None:
            message = f"parameter '{name}' is not part of this model config"
        elif found is None:
            message = f"parameter '{name}' missing from checkpoint (expected shape {expected})"
        else:
            message = f"parameter '{name}' has shape {found}, config requires {expected}"
        super().__init__(message)


class DatasetError(MSTFormerError):
    """Dataset content is unusable (bad labels, missing splits, unreadable paths)."""

    exit_code = 3


class DataFormatError(DatasetError):
    """Binary container is malformed."""

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})")


class UndefinedMetricError(MSTFormerError, ValueError):
    """A metric cannot be computed because a class is absent."""

    exit_code = 3


class NumericError(MSTFormerError, ArithmeticError):
    """Non-finite values appeared during training."""

    exit_code = 4

    def __init__(self, message: str, step: Optional[int] = None):
        self.step = step
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
