"""Exception taxonomy for the extraction adapter."""


class ExtractionError(Exception):
    """Base class for everything this package raises on purpose."""


class FormatError(ExtractionError):
    """A value cannot be represented in the interchange byte formats."""


class JobError(ExtractionError):
    """An extraction job is configured inconsistently."""


class DetectorError(ExtractionError):
    """A detector backend is unavailable or failed to run."""
