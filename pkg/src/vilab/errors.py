"""Exception types raised by the solvers and oracles."""


class VIError(Exception):
    """Base class for every error raised by vilab."""


class ValidationError(VIError, ValueError):
    """Input data violates a documented invariant."""


class UnsupportedProjection(VIError):
    """No exact projection exists for this set / inner-product pair."""


class IncompatibleStructure(VIError):
    """Set and functional are not coordinate-separable on the same axes."""


class NonContraction(VIError):
    """Relaxation step lies outside the contraction window."""


class MaxIterExceeded(VIError):
    """Iteration budget exhausted. The last report is attached."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class KernelMismatch(VIError):
    """Penalty operator does not vanish exactly on the constraint set."""


class SmallnessViolated(VIError):
    """Friction data break the smallness condition, so uniqueness is lost."""


class MeshError(VIError, ValueError):
    """Malformed mesh or boundary partition."""


class UntaggedBoundary(MeshError):
    pass


class EmptyGamma1(MeshError):
    pass


class NonSPD(VIError):
    """Assembled operator is not positive definite."""
