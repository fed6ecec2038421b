"""Interactive data exchange: spectrum slicing, hashing protocols and bounds."""

from .errors import (
    ConfigError,
    ConnectionLost,
    DataExchangeError,
    DistributionTooLarge,
    EncodingOverflow,
    HandshakeMismatch,
    KeyTooLong,
    NotAlmostUniform,
    NotInClass,
    WireFormatError,
    ZeroProbability,
)
from .sources import JointSource, SequenceSource, density_stats, entropy_density, sample

__version__ = "0.1.0"
