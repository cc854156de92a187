"""Exception hierarchy shared by the library and the CLI."""


class GeoflowError(Exception):
    """Base class for all library errors."""


class InputError(GeoflowError, ValueError):
    """Malformed, non-finite or mismatched input."""


class DimensionError(InputError):
    """Array shapes that do not agree."""


class RankDeficientError(GeoflowError):
    """Data does not support the requested subspace dimension."""

    def __init__(self, requested, achievable):
        self.requested = requested
        self.achievable = achievable
        super().__init__(
            f"rank-deficient data: requested d={requested}, achievable rank {achievable}"
        )


class UnsupportedDimensionError(GeoflowError):
    """Subspace dimension violates the flow-kernel constraint d <= D/2."""


class DegenerateFeatureError(GeoflowError):
    """A feature has zero variance in the fitting set."""

    def __init__(self, index):
        self.index = index
        super().__init__(f"feature {index} has zero variance in the labelled healthy set")


class DegenerateTrainingError(GeoflowError):
    """Training labels contain a single class."""


class ExcludedConfigurationError(GeoflowError):
    """Morph parameter falls inside the excluded low-alpha band."""

    def __init__(self, alpha, floor):
        self.alpha = alpha
        self.floor = floor
        super().__init__(f"alpha={alpha!r} is below alpha_floor={floor!r} (excluded configuration)")


class EmptyPatchError(GeoflowError):
    """Damage patch contains no element centroid."""


class CoverageError(GeoflowError):
    """Requested FRF band is not covered by the available modes."""


class SelectionFailureError(GeoflowError):
    """No mix value met the stability threshold."""

    def __init__(self, best_cosine, threshold):
        self.best_cosine = best_cosine
        self.threshold = threshold
        super().__init__(
            f"no mix value reached threshold {threshold}; best mean cosine {best_cosine:.6f}"
        )


class ConfigError(GeoflowError):
    """Invalid run configuration."""


class DataError(GeoflowError):
    """Missing or unreadable dataset files."""
