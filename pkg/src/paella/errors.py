"""Exception types shared across the package."""


class PaellaError(Exception):
    """Base class for domain errors raised by this package."""


class TraceFormatError(PaellaError):
    """A trace file is malformed, truncated, or carries invalid values."""


class FeatureFormatError(PaellaError):
    """A feature file is malformed, truncated, or carries invalid values."""


class ModelFormatError(PaellaError):
    """A model file has the wrong magic, version, or inconsistent shapes."""


class TransportError(PaellaError):
    """A message could not be delivered and the retry buffer is exhausted."""
