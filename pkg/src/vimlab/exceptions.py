"""Exception types shared across the package."""


class VimlabError(Exception):
    """Base class for all vimlab errors."""


class ValidationError(VimlabError, ValueError):
    """An argument or configuration value is invalid."""


class DegenerateColumnError(ValidationError):
    """A covariate column has zero variance (or another degeneracy)."""


class DimensionError(ValidationError):
    """Array shapes are incompatible with the requested operation."""


class RankDeficiencyError(VimlabError):
    """Normal equations are singular and no penalty was requested."""


class NumericalRankError(VimlabError):
    """A covariance block stayed singular even after jitter."""


class SamplerKindError(ValidationError):
    """A sampler of the wrong kind was passed to an estimator."""


class SizeError(ValidationError):
    """Problem size exceeds what exact enumeration supports."""


class InsufficientSampleError(VimlabError):
    """Too few observations for the requested test or split."""


class UnsupportedMethodError(ValidationError):
    """The requested operation is undefined for this method's report."""


class DegenerateDenominatorError(VimlabError):
    """A normalizing denominator is numerically zero."""


class LossDomainError(ValidationError):
    """A loss was evaluated outside its domain."""


class MissingColumnError(ValidationError):
    """A named CSV column is absent."""


class NonNumericCellError(ValidationError):
    """A CSV cell could not be parsed as a number."""


class NanCellError(ValidationError):
    """A CSV cell parsed to NaN or infinity."""


class ConfigError(ValidationError):
    """An experiment configuration file is invalid."""
