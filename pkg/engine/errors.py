"""
Error hierarchy

Every failure raised by the engine and the analysis packages derives from CapaError,
so the command-line harness can map it to an exit code.
"""

from typing import Optional


class CapaError(Exception):
    """Base class for all engine errors"""


class ConfigurationError(CapaError, ValueError):
    """Invalid dimensions, plans, ratios or a plan that does not fit the model"""


class SequenceTooLongError(ConfigurationError):
    """Token stream longer than the model's max_seq"""


class ProbeError(CapaError):
    """A report asked for a layer that the forward pass did not probe"""


class CalibrationError(CapaError):
    """Calibration could not produce moments (empty scope, empty sample set)"""


class DistributionError(CapaError, ValueError):
    """Probability vectors that are not normalized or do not match in length"""


class FormatError(CapaError):
    """Malformed tensor container or artifact file"""


class StageError(CapaError):
    """
    Failure inside a pipeline stage

    Wraps the original error and records which stage raised it.
    """

    def __init__(self, stage: str, message: str, cause: Optional[BaseException] = None):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.cause = cause
