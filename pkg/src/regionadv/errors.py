"""Exception taxonomy shared by the library and the CLI.

Every error carries a machine-readable ``category`` string; the CLI maps
categories to exit codes (see README).
"""

from __future__ import annotations


class RegionAdvError(Exception):
    """Base class for all library errors."""

    category = "internal"


class ConfigError(RegionAdvError):
    """Invalid configuration value or missing required config."""

    category = "config"


class InputShapeError(RegionAdvError):
    """An array's shape does not match the expected model input shape."""

    category = "input-shape"


class DomainError(RegionAdvError):
    """A value is outside its admissible domain (e.g. label out of range)."""

    category = "domain"


class NonFiniteError(RegionAdvError):
    """NaN or Inf encountered where finite values are required."""

    category = "numeric"


class TrainingDivergedError(RegionAdvError):
    """Training loss became non-finite."""

    category = "training-diverged"


class PreconditionError(RegionAdvError):
    """An operation's stated precondition does not hold."""

    category = "precondition"


# --- dataset parsing -------------------------------------------------------

class DataFormatError(RegionAdvError):
    """Base class for dataset wire-format errors."""

    category = "data-format"


class IdxMagicError(DataFormatError):
    """IDX file magic number is wrong for the requested record type."""


class IdxFormatError(DataFormatError):
    """IDX header dimensions disagree with the file payload."""


class DatasetMismatchError(DataFormatError):
    """Image and label files disagree on the record count."""


class InsufficientSamplesError(RegionAdvError):
    """Not enough eligible samples to satisfy a sampling request."""

    category = "insufficient-samples"


# --- attacks ----------------------------------------------------------------

class InfeasibleAttackError(RegionAdvError):
    """No perturbation within the given budget reaches the target class.

    ``best_margin`` is the largest target-vs-runner-up logit margin seen.
    """

    category = "infeasible"

    def __init__(self, message: str, best_margin: float = float("-inf")):
        super().__init__(message)
        self.best_margin = best_margin


class BudgetExceededError(RegionAdvError):
    """Iteration budget exhausted before reaching the requested rate.

    Carries the best fooling rate and perturbation found so far.
    """

    category = "budget-exceeded"

    def __init__(self, message: str, best_rate: float = 0.0, best_delta=None):
        super().__init__(message)
        self.best_rate = best_rate
        self.best_delta = best_delta


# --- array container / checkpoints -----------------------------------------

class ContainerError(RegionAdvError):
    """Base class for array-container load errors."""

    category = "checkpoint"


class ContainerFormatError(ContainerError):
    """Magic header or manifest is corrupt."""


class ContainerVersionError(ContainerError):
    """Container format version is not supported."""


class ContainerPayloadError(ContainerError):
    """Payload length disagrees with the manifest (truncated or edited)."""


class CheckpointShapeError(ContainerError):
    """Stored parameter shapes do not match the architecture descriptor."""


class ArtifactNotFoundError(RegionAdvError):
    """A required artifact file does not exist."""

    category = "artifact-not-found"
