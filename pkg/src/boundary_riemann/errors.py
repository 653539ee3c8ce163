"""Exception hierarchy shared by every module."""


class BoundaryRiemannError(Exception):
    """Base class for all errors raised by the package."""


class InvalidParams(BoundaryRiemannError, ValueError):
    pass


class OutOfDomain(BoundaryRiemannError, ValueError):
    pass


class HyperbolicityCheckFailed(BoundaryRiemannError):
    pass


class StrictHyperbolicityViolation(HyperbolicityCheckFailed):
    pass


class NonCharacteristicViolation(HyperbolicityCheckFailed):
    pass


class NonUniformSignature(HyperbolicityCheckFailed):
    pass


class IllConditioned(BoundaryRiemannError):
    pass


class IntegrationEscape(BoundaryRiemannError):
    pass


class ToleranceFailure(BoundaryRiemannError):
    pass


class NewtonDivergence(BoundaryRiemannError):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class NotInManifold(BoundaryRiemannError):
    """Raised by membership when the best residual exceeds the tolerance.

    The best seed and residual found are kept on the exception.
    """

    def __init__(self, message, S=None, residual=None):
        super().__init__(message)
        self.S = S
        self.residual = residual


class InsufficientTail(BoundaryRiemannError):
    pass


class NoConvergence(BoundaryRiemannError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class RootFindFailure(BoundaryRiemannError):
    pass


class GNLViolation(BoundaryRiemannError):
    pass


class MeshExhausted(BoundaryRiemannError):
    pass


class ContinuationFailure(BoundaryRiemannError):
    def __init__(self, message, rung, partial=None):
        super().__init__(message)
        self.rung = rung
        self.partial = list(partial or [])


class RangeExceeded(BoundaryRiemannError, ValueError):
    pass


class NoLocalSolution(BoundaryRiemannError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class UnresolvedSpeed(BoundaryRiemannError):
    pass


class ComparisonInconclusive(BoundaryRiemannError):
    pass
