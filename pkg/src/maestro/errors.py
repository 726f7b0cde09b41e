"""Exception types shared across the engine."""


class MaestroError(Exception):
    """Base class for all engine errors."""


class InvalidFrameError(MaestroError):
    """A pose frame contains non-finite or otherwise unusable data."""


class ConfigError(MaestroError):
    """A configuration value violates its contract."""


class UnsupportedRateError(MaestroError):
    """Requested rate conversion is not an integer decimation."""


class InvalidAnnotationError(MaestroError):
    """Timeline annotations (bar starts, holds, labels) are inconsistent."""


class UndefinedPhaseError(MaestroError):
    """Phase extraction was attempted on a zero sin/cos vector."""


class ContainerFormatError(MaestroError):
    """A serialized container is corrupt, truncated, or of the wrong kind."""


class TrainingDivergedError(MaestroError):
    """Training produced a non-finite loss."""


class UndefinedMetricError(MaestroError):
    """A metric was requested on a log that does not contain its inputs."""


class ProtocolError(MaestroError):
    """A wire or playback command violated the session protocol."""
