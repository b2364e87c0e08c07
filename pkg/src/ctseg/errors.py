"""Exception types raised by the toolkit."""


class CTSegError(Exception):
    """Base class for all toolkit errors."""


class GeometryError(CTSegError):
    """Invalid or mismatched grid geometry (dims, spacing, direction)."""


class ParseError(CTSegError):
    """File could not be parsed (truncated or corrupt)."""


class UnsupportedFormatError(CTSegError):
    """File parsed but uses an unsupported encoding or datatype."""


class OrientationError(GeometryError):
    """Direction matrix is not a signed axis permutation (oblique volume)."""


class EmptySurfaceError(CTSegError):
    """Field has no zero crossing, so no surface can be extracted."""


class TopologyError(CTSegError):
    """Mesh is not closed / not watertight."""


class SeedError(CTSegError):
    """Seed region empty or entirely outside the intensity range."""


class RegistrationError(CTSegError):
    """Affine registration failed to converge."""


class SingularSystemError(CTSegError):
    """Interpolation system is singular (degenerate constraint points)."""


class DegenerateInputError(CTSegError):
    """Metric undefined for this input (e.g. zero variance)."""


class StageError(CTSegError):
    """Operation not allowed in the session's current stage."""


class ScriptError(CTSegError):
    """Edit script invalid; carries the offending event index."""

    def __init__(self, message: str, event_index: int | None = None):
        if event_index is not None:
            message = f"event {event_index}: {message}"
        super().__init__(message)
        self.event_index = event_index


class ConfigError(CTSegError):
    """Pipeline configuration file invalid."""
