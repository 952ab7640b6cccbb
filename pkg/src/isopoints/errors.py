"""Exceptions shared across the package."""


class IsoPointsError(Exception):
    """Base class for all package-specific errors."""


class SingularGradient(IsoPointsError):
    """Field gradient vanishes (or is undefined) at the query point."""


class EmptyInput(IsoPointsError):
    """An operation received an empty point set where at least one point is required."""


class InsufficientPoints(IsoPointsError):
    """Fewer points than the operation's minimum (e.g. k-NN with k > n-1)."""


class DegenerateNeighborhood(IsoPointsError):
    """Neighborhood has no usable normal direction (isotropic or rank-deficient covariance)."""


class ExtractionFailed(IsoPointsError):
    """Iso-point extraction could not produce a converged point set."""


class UnsupportedLoss(IsoPointsError):
    """Loss specification references a primitive the autodiff core does not implement."""


class NonFiniteLoss(IsoPointsError):
    """Objective or gradient became NaN/inf during optimization."""


class MissingNormals(IsoPointsError):
    """Operation requires per-point normals but none were supplied."""


class FormatError(IsoPointsError):
    """Malformed file content (PLY, weight blob, or config)."""
