"""Exception types raised across the package."""


class DataExchangeError(Exception):
    """Base class for all package errors."""


class ZeroProbability(DataExchangeError, ValueError):
    """A queried pair lies outside the support of the distribution."""


class DistributionTooLarge(DataExchangeError, OverflowError):
    """Exact enumeration would exceed the configured atom cap.

    Switch to Monte Carlo estimation when this is raised.
    """


class EncodingOverflow(DataExchangeError, ValueError):
    """A sequence index does not fit into the hash input width."""


class NotAlmostUniform(DataExchangeError, ValueError):
    """The joint density spread exceeds the declared margin."""


class KeyTooLong(DataExchangeError, ValueError):
    """Requested key length violates the leftover-hash precondition."""


class NotInClass(DataExchangeError, ValueError):
    """A sequence does not belong to the stated (conditional) type class."""


class ConfigError(DataExchangeError, ValueError):
    """Malformed experiment configuration or source description."""

    def __init__(self, message, *, line=None, field=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
        self.line = line
        self.field = field


class HandshakeMismatch(DataExchangeError):
    """Peers disagree on protocol parameters."""


class ConnectionLost(DataExchangeError):
    """The byte stream closed before the session completed."""


class WireFormatError(DataExchangeError, ValueError):
    """A received frame is malformed or uses an unsupported version."""
