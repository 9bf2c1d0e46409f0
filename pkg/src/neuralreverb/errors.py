"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class StateError(RuntimeError):
    """Operation invoked in an invalid state (stale graph, bad indices, missing grads)."""


class WavParseError(ValueError):
    """Malformed RIFF/WAVE container."""


class UnsupportedFormatError(ValueError):
    """WAV codec or sample layout this reader does not handle."""


class IntegrityError(RuntimeError):
    """Checkpoint file failed its checksum or is structurally damaged."""


class VersionError(RuntimeError):
    """Checkpoint format version not supported by this build."""


class ConfigError(ValueError):
    """Model or training configuration violates an invariant."""


class DataError(ValueError):
    """Dataset-level problem: bad manifest, mismatched pair, wrong sample rate."""


class NumericError(ArithmeticError):
    """Non-finite value detected during computation."""
