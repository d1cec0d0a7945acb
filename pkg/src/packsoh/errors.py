"""Exception types shared across the package."""


class PackSohError(Exception):
    """Base class for all errors raised by this package."""


class InvalidSpecError(PackSohError):
    """A pack, cell, sensor, or protocol specification violates an invariant."""


class DomainError(PackSohError):
    """An argument is outside the domain an operation is defined on."""


class WindowUnreachableError(PackSohError):
    """The requested voltage window cannot be reached by the simulated pack."""


class TraceFormatError(PackSohError):
    """A telemetry trace is structurally unusable (e.g. missing mandatory columns)."""


class TraceOrderingError(PackSohError):
    """Timestamps of a trace signal decrease; carries the offending row index."""

    def __init__(self, message: str, row_index: int | None = None):
        super().__init__(message)
        self.row_index = row_index


class SynchronizationError(PackSohError):
    """Signals share no common time span, or a signal is too short to resample."""


class WindowNotCoveredError(PackSohError):
    """The session voltage never crosses the requested cut-off window."""


class InsufficientDataError(PackSohError):
    """A trace is too short for the requested check."""


class SignConventionError(PackSohError):
    """Charge-segment current is negative beyond the noise tolerance."""


class ChemistryMismatchError(PackSohError):
    """Feature sets from different chemistry templates cannot be compared."""


class MeasurementRefusedError(PackSohError):
    """The session cannot yield a valid measurement; carries the diagnostic."""
