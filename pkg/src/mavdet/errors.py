"""Exception types shared across the package."""


class MavdetError(Exception):
    """Base class for errors raised by this package."""


class InvalidConfigError(MavdetError, ValueError):
    """A configuration value is out of its documented range."""


class InvalidDimensionsError(MavdetError, ValueError):
    """An image, grid, or box has non-positive or nonsensical dimensions."""


class DimensionMismatchError(MavdetError, ValueError):
    """Two images that must share a shape do not."""


class InsufficientMatchesError(MavdetError, RuntimeError):
    """Too few tracked point pairs to fit a projective transform."""


class DegenerateConfigurationError(MavdetError, RuntimeError):
    """Point pairs are collinear or otherwise unusable for model fitting."""


class EmptyMatchSetError(MavdetError, ValueError):
    """A statistic over tracked matches was requested with none available."""


class EmptyInputError(MavdetError, ValueError):
    """An operation that needs at least one element received none."""


class NumericDegeneracyError(MavdetError, RuntimeError):
    """A matrix that must be invertible is singular or ill-conditioned."""


class BackendUnavailableError(MavdetError, RuntimeError):
    """An external detector or classifier process cannot serve requests."""


class NoGroundTruthError(MavdetError, ValueError):
    """Evaluation was requested against an empty ground-truth set."""
