"""Exception hierarchy shared by all simulator modules."""


class ImrSimError(Exception):
    """Base class for every error raised by the simulator."""


class AddressError(ImrSimError):
    """A block address falls outside the addressable device space."""


class InvalidTripleError(ImrSimError):
    """A (zone, track, block) triple violates the geometry."""


class ZoneFullError(ImrSimError):
    """No unallocated physical block is left in a zone."""


class LogicError(ImrSimError):
    """An internal precondition was violated by the caller."""


class ConfigError(ImrSimError):
    """Invalid device or workload configuration."""


class NoDataError(ImrSimError):
    """A statistic was queried before any data exists for it."""


class RestoreError(ImrSimError):
    """A checkpoint could not be read, verified or applied."""


class TraceParseError(ImrSimError):
    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class UnknownOpTypeError(TraceParseError):
    """Trace record with an op type other than Read/Write."""
