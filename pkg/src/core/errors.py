"""
Exception hierarchy shared by the library and the CLI.
"""
from typing import Optional


class LframesError(Exception):
    """Base class for all library errors."""


class ContractViolation(LframesError, ValueError):
    """A precondition of an operation was not met by its caller."""


class RepSpecParseError(LframesError, ValueError):
    """A representation string does not match the ``<mult>x<order><parity>`` grammar."""

    def __init__(self, text: str, span: tuple[int, int], reason: str):
        self.text = text
        self.span = span
        self.reason = reason
        start, end = span
        super().__init__(f"{reason} at [{start}:{end}] {text[start:end]!r} in {text!r}")


class ConfigError(LframesError):
    """Task or dataset configuration is invalid."""


class PipelineConfigError(ConfigError):
    """Pipeline layers do not type-check."""

    def __init__(self, message: str, layer_index: Optional[int] = None):
        self.layer_index = layer_index
        prefix = f"layer {layer_index}: " if layer_index is not None else ""
        super().__init__(f"{prefix}{message}")


class TrainingDivergence(LframesError):
    """Loss became NaN or infinite during training."""

    def __init__(self, step: int, loss: float):
        self.step = step
        self.loss = loss
        super().__init__(f"training diverged at step {step} (loss={loss})")
