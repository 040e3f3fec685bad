"""Exception hierarchy shared by all modules."""


class FSIError(Exception):
    """Base class for every error raised by the package."""


class OutOfCollar(FSIError):
    """A point lies outside the tubular neighbourhood of the reference surface."""


class DisplacementOutOfRange(FSIError):
    """A displacement leaves the admissible collar ``alpha + kappa < eta < beta - kappa``."""


class ZeroWeight(FSIError):
    """The corrector weight has (numerically) vanishing mass."""


class NonzeroMean(FSIError):
    """Right-hand side of the divergence problem is not mean free."""


class NewtonDiverged(FSIError):
    """Newton iteration failed; ``trace`` holds ``(iteration, residual, step)`` rows."""

    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = list(trace)


class CoercivityLost(FSIError):
    """The coercivity weight gamma dropped below the configured floor."""


class SolverFailure(FSIError):
    """A linear solve broke down or did not reach tolerance."""


class JacobianNonpositive(FSIError):
    """The ALE Jacobian is not positive somewhere in the reference domain."""


class IncompatibleData(FSIError):
    """Initial data cannot be made compatible with the kinematic coupling."""


class ParseError(FSIError):
    """Configuration file is not valid JSON."""

    def __init__(self, message, line=None, field=None):
        super().__init__(message)
        self.line = line
        self.field = field


class ValidationError(FSIError):
    """Configuration violates one or more invariants; ``violations`` lists all of them."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class MissingSnapshots(FSIError):
    """A trajectory directory holds no snapshot files."""


class KornPreconditionError(FSIError):
    """Velocity field does not satisfy the trace/divergence hypotheses of the Korn identity."""


class UnsupportedGeometry(FSIError):
    """The requested operation is only implemented for another reference geometry."""
