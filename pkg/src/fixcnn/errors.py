"""Exception types shared across the toolchain."""


class FixcnnError(Exception):
    """Base class for toolchain errors."""


class FormatError(FixcnnError):
    """A file does not conform to its declared format."""


class ConsistencyError(FixcnnError):
    """Two artifacts that must agree do not (e.g. image/label counts)."""


class TrainingError(FixcnnError):
    """Training diverged; carries the epoch where it happened."""

    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch


class CalibrationError(FixcnnError):
    """The cost model fit is degenerate or missing."""


class SimulationError(FixcnnError):
    """The stream simulator made no progress (FIFO sizing bug)."""
