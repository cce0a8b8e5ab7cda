"""Exception hierarchy shared by every xmodal module, plus CLI exit codes."""

from typing import Iterable, Optional

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DIVERGENCE = 4
EXIT_MISSING_CHECKPOINT = 5
EXIT_NO_HOLDOUT = 6
EXIT_GRADCHECK = 7


class XModalError(Exception):
    """Base class for all errors raised by xmodal"""

    exit_code = 1


class DimensionError(XModalError, ValueError):
    """Shape mismatch inside a network or density model"""

    def __init__(self, message: str, layer_index: Optional[int] = None):
        if layer_index is not None:
            message = f"layer {layer_index}: {message}"
        super().__init__(message)
        self.layer_index = layer_index


class NonFiniteError(XModalError, FloatingPointError):
    """A NaN or Inf showed up where finite values are required"""

    def __init__(self, message: str, name: Optional[str] = None):
        if name is not None:
            message = f"{name}: {message}"
        super().__init__(message)
        self.name = name


class InsufficientDataError(XModalError, ValueError):
    """Too few samples to fit the requested model"""


class ConfigError(XModalError, ValueError):
    exit_code = EXIT_CONFIG

    def __init__(self, message: str, key: Optional[str] = None):
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)
        self.key = key


class DataSpecError(XModalError, ValueError):
    """Invalid synthetic dataset specification; lists every violated field"""

    exit_code = EXIT_CONFIG

    def __init__(self, violations: Iterable[str]):
        self.violations = list(violations)
        super().__init__("invalid dataset spec: " + "; ".join(self.violations))


class FormatError(XModalError, ValueError):
    """Binary artifact could not be decoded"""

    exit_code = EXIT_IO

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class DivergenceError(XModalError, RuntimeError):
    exit_code = EXIT_DIVERGENCE

    def __init__(self, iteration: int, modality: str, loss: float):
        super().__init__(f"training diverged at iteration {iteration} "
                         f"(modality {modality}, loss {loss})")
        self.iteration = iteration
        self.modality = modality


class MissingArtifactError(XModalError, FileNotFoundError):
    exit_code = EXIT_MISSING_CHECKPOINT


class HoldoutError(XModalError, ValueError):
    exit_code = EXIT_NO_HOLDOUT


class GradCheckFailure(XModalError, AssertionError):
    exit_code = EXIT_GRADCHECK
