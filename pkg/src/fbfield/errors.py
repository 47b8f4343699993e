"""Exception types shared across the package."""


class FbfieldError(Exception):
    """Base class for all package errors."""


class NegativeWeight(FbfieldError):
    """A measure weight is negative."""


class SpaceMismatch(FbfieldError):
    """Two index functions live on different measure spaces."""


class DimensionMismatch(FbfieldError):
    """Coordinate dimensions do not agree."""


class TriangleViolation(FbfieldError):
    """(nf, ng, dsq) cannot come from a genuine pair of L2 elements."""


class HurstRangeError(FbfieldError):
    """Hurst parameter outside its admissible range."""


class QuadratureError(FbfieldError):
    """A singular-integral quadrature failed to converge."""


class NotPSD(FbfieldError):
    """A matrix required to be positive semidefinite is not."""


class CannotReachRank(FbfieldError):
    """The discretization is too coarse to supply the requested number of
    independent basis functions."""


class TooFewScales(FbfieldError):
    """A scaling fit needs at least two abscissae."""


class EmptyBall(FbfieldError):
    """A metric ball used by an exponent estimator holds fewer than two points."""


class AllZeroHits(FbfieldError):
    """No small-ball level produced a usable hit count."""


class RangeViolation(FbfieldError):
    """A regularity function left the admissible Hurst band."""


class UnderResolved(FbfieldError):
    """Grid resolution cannot resolve the requested spectral content."""
