class DatabidError(Exception):
    """Base class for every error raised by ``databid``."""


class InvalidParameterError(DatabidError, ValueError):
    """A numeric parameter is outside its documented domain."""


class InvalidInputError(DatabidError, ValueError):
    """Input data (observations, outcomes, results) is unusable."""


class BidRangeError(DatabidError, IndexError):
    """A lookup index falls outside the matrix or model domain."""


class ConfigError(DatabidError, ValueError):
    """The experiment configuration could not be loaded or validated."""


class EstimatorError(DatabidError):
    """Training produced an unusable model (e.g. non-finite loss)."""
