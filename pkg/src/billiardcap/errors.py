"""Exception hierarchy shared by all modules."""


class BilliardCapError(Exception):
    """Base class for every error raised by this package."""


# geometry
class NonFiniteInput(BilliardCapError, ValueError):
    pass


class ProjectionError(BilliardCapError):
    """Newton projection onto the boundary did not converge."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class OutsideCollar(BilliardCapError):
    pass


class EmptyInterior(BilliardCapError):
    pass


class OutsideDomain(BilliardCapError):
    pass


class DomainSpecError(BilliardCapError, ValueError):
    pass


# actionloop
class NoConvergence(BilliardCapError):
    pass


class LeftDomain(BilliardCapError):
    pass


class DegenerateTau(BilliardCapError):
    pass


class HessianAssemblyFailure(BilliardCapError):
    pass


# continuation
class StageDiverged(BilliardCapError):
    def __init__(self, eps, message=""):
        super().__init__(f"continuation stage diverged at eps={eps:.3e}: {message}")
        self.eps = eps


class TauCollapse(BilliardCapError):
    pass


class TauBlowup(BilliardCapError):
    pass


class NoBouncesFound(BilliardCapError):
    pass


class SpeedNotUnit(BilliardCapError):
    pass


class TangentialBounce(BilliardCapError):
    pass


# billiard
class TangentialIncidence(BilliardCapError):
    pass


class MarchStall(BilliardCapError):
    pass


class CollapsedEdge(BilliardCapError):
    pass


# cli
class SchemaError(BilliardCapError, ValueError):
    pass
