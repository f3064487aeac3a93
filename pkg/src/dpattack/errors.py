"""Exception types shared across the toolkit."""


class DPAttackError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(DPAttackError):
    """Array shapes are inconsistent with each other or with the declared layout."""


class ChannelMismatch(DPAttackError):
    """Color conversion requires a 3-channel image."""


class UnsupportedNorm(DPAttackError):
    """Requested norm is not one of {inf, 2}."""


class BlockSizeError(DPAttackError):
    """Block size is non-positive or exceeds the image extent."""


class LevelError(DPAttackError):
    """Wavelet level is infeasible for the given image dimensions."""


class CapabilityError(DPAttackError):
    """A loss/gradient accessor was invoked on a hard-label-only backend."""


class OracleUnavailable(DPAttackError):
    """Remote oracle transport failed after retries."""


class BudgetExhausted(DPAttackError):
    """Query budget was consumed before the call could be issued."""


class NotAdversarialAtMax(DPAttackError):
    """Direction is not adversarial even at the upper search magnitude."""


class InitFailed(DPAttackError):
    """Neither initial direction produced an adversarial example."""


class DegenerateInput(DPAttackError):
    """Statistical input has zero variance or too few samples."""


class TrainingFailed(DPAttackError):
    """Built-in model training did not reach the required accuracy."""


class EmptyDataset(DPAttackError):
    """Benchmark invoked on an empty image set."""


class WriteError(DPAttackError):
    """Report serialization could not be written."""
