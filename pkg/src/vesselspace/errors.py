"""Exception taxonomy shared by all vesselspace modules.

The CLI maps these onto process exit codes: configuration problems exit 2,
data/format problems exit 3, numeric failures exit 4.
"""


class VesselspaceError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(VesselspaceError):
    """Invalid or inconsistent configuration (bad ranges, ladder mismatch, ...)."""


class DomainError(VesselspaceError, ValueError):
    """Argument outside the documented domain of an operation."""


class DimensionError(VesselspaceError, ValueError):
    """Array shapes or resolutions that do not match the operation's contract."""


class DataError(VesselspaceError):
    """Malformed, truncated, or inconsistent artifact files."""


class NumericError(VesselspaceError):
    """Nonfinite values or failed numeric procedures (bracket exhaustion, ...)."""
