"""Exception types shared across the package."""


class FibnetError(Exception):
    """Base class for all fibnet errors."""


class ShapeMismatchError(FibnetError):
    """Tensor shapes disagree; the message names the offending axis."""


class ConfigError(FibnetError):
    """A model or training configuration violates an invariant."""


class DatasetError(FibnetError):
    """Corpus scanning, decoding or splitting failed."""


class CheckpointError(FibnetError):
    """Checkpoint directory is missing, malformed, or mismatched."""


class MissingGradientError(FibnetError):
    """An optimizer step found a trainable entry without a gradient."""


class TrainingDiverged(FibnetError):
    """Loss became non-finite; carries a diagnostic of the failing step."""
