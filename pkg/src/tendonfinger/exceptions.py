"""Exception hierarchy shared by all modules."""


class TendonFingerError(Exception):
    """Base class for every error raised by this package."""


class NonConvergence(TendonFingerError):
    """The equilibrium solver hit its iteration cap above tolerance.

    ``sample_index`` is set when the failure happened inside a trajectory.
    """

    def __init__(self, message, *, gradient_norm=None, iterations=None, sample_index=None):
        super().__init__(message)
        self.gradient_norm = gradient_norm
        self.iterations = iterations
        self.sample_index = sample_index


class InfeasibleGeometry(TendonFingerError):
    """An obstacle overlaps the finger base or no feasible configuration exists."""


class SingularConfiguration(TendonFingerError):
    """A Jacobian or reduced stiffness lost rank."""


class UnstableEquilibrium(TendonFingerError):
    """The grasp energy Hessian is not positive definite."""

    def __init__(self, message, eigenvalues=None):
        super().__init__(message)
        self.eigenvalues = eigenvalues


class RankDeficientData(TendonFingerError):
    """Displacement samples do not span the space; ``null_direction`` is the missing axis."""

    def __init__(self, message, null_direction=None):
        super().__init__(message)
        self.null_direction = null_direction


class ParseError(TendonFingerError):
    """Scenario text is not well-formed JSON."""


class ValidationError(TendonFingerError):
    """A parsed value violates a type invariant; ``field`` names the offending path."""

    def __init__(self, field, constraint):
        super().__init__(f"{field}: {constraint}")
        self.field = field
        self.constraint = constraint
