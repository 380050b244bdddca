"""Exception types shared across the package.

Each maps to a CLI exit code: ConfigError -> 2, NumericalDivergence and
NonFiniteState -> 3, file/format errors -> 4.
"""


class MimiclabError(Exception):
    """Base class for all package errors."""


class ConfigError(MimiclabError):
    """Invalid or inconsistent run configuration."""


class MorphologyError(ConfigError):
    """Morphology spec violates a structural invariant."""


class NonFiniteState(MimiclabError):
    """Simulator state became NaN/inf; the episode should terminate."""


class NumericalDivergence(MimiclabError):
    """A training loss became non-finite."""


class FormatError(MimiclabError):
    """Malformed file on disk (bad header, dimension mismatch)."""


class MissingFrame(FormatError):
    """Gap in a video directory's frame numbering."""


class ResolutionMismatch(MimiclabError):
    """Two images that must share a resolution do not."""


class DimensionMismatch(MimiclabError):
    """Two vectors that must share a dimension do not."""


class IndexOutOfRange(MimiclabError):
    """Frame index outside the video."""


class EmptyField(MimiclabError):
    """Required text field is empty."""


class UnstableGait(MimiclabError):
    """A scripted gait made the agent fall before its duration elapsed."""


class CheckpointFormatError(FormatError):
    """Checkpoint file failed magic/version/shape validation."""


class BridgeUnavailable(MimiclabError):
    """Encoder bridge process or socket cannot be reached."""


class ProtocolError(MimiclabError):
    """Encoder bridge sent a malformed or inconsistent message."""
