"""Exception types shared across the package."""


class ChaoscrackError(Exception):
    """Base class for all package-specific failures."""


class FormatError(ChaoscrackError, ValueError):
    """Malformed external input: IDX file, PNG, manifest, checkpoint."""


class DivergenceError(ChaoscrackError, ArithmeticError):
    """A chaotic trajectory or a training run produced non-finite values."""


class CheckpointError(FormatError):
    """Checkpoint file rejected: bad magic, version, digest, or config."""
