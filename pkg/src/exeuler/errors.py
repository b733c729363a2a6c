"""Exception hierarchy shared by all modules."""


class ExEulerError(Exception):
    """Base class for every error raised by this package."""


class InsideBody(ExEulerError, ValueError):
    """A point that must lie in the fluid lies inside (or on) the body."""


class CoincidentPoints(ExEulerError, ValueError):
    pass


class FitDiverged(ExEulerError):
    """Boundary fit could not reach the residual target at the maximum order."""


class NonSimpleBoundary(ExEulerError, ValueError):
    pass


class NewtonDiverged(ExEulerError):
    pass


class ExpansionDiverged(ExEulerError):
    """Harmonic expansion coefficients failed to decay."""


class QuadratureUnresolved(ExEulerError):
    """Boundary quadrature refinement did not agree to tolerance."""


class SingularSystem(ExEulerError):
    pass


class ParticleTooClose(ExEulerError):
    """A vortex particle came within the breakdown distance of the body."""


class StepRejected(ParticleTooClose):
    """An intermediate RK stage left the fluid domain."""


class SolverStagnated(ExEulerError):
    pass


class UnboundedEnergy(ExEulerError, ValueError):
    """Kinetic energy is infinite (nonzero far-field circulation)."""


class EnvelopeViolated(ExEulerError):
    pass
