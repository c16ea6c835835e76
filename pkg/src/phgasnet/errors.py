"""Exception hierarchy shared by all modules."""


class PhGasError(Exception):
    """Base class for all library errors."""


class DomainError(PhGasError, ValueError):
    """A thermodynamic state lies outside the validity domain (rho <= 0, e <= 0)."""


class GraphError(PhGasError, ValueError):
    """The network topology violates a structural assumption."""


class ConfigError(PhGasError, ValueError):
    """A configuration value is missing or invalid."""

    def __init__(self, message, pointer=""):
        self.pointer = pointer
        super().__init__(f"{pointer}: {message}" if pointer else message)


class AssemblyError(PhGasError):
    """Operators could not be assembled consistently."""


class BoundaryDegeneracyError(PhGasError):
    """A boundary or coupling flow vanished where a division by it is needed."""


class DegenerateNodeError(BoundaryDegeneracyError):
    """Entropy mixing at a node with zero total incoming flow."""


class NonConvergenceError(PhGasError):
    """Newton iteration did not reach the tolerance."""

    def __init__(self, message, residual_norm=float("nan"), time=None):
        self.residual_norm = residual_norm
        self.time = time
        super().__init__(message)


class SolverError(PhGasError):
    """A linear solve failed (singular or non-finite Jacobian)."""


class InconsistentInitialDataError(PhGasError):
    """Initial data cannot be completed to a consistent DAE state."""


class RankDeficiencyError(PhGasError, ValueError):
    """The requested basis width exceeds the numerical rank of the data."""

    def __init__(self, message, max_rank=None):
        self.max_rank = max_rank
        super().__init__(message)


class StructureError(PhGasError):
    """A basis or operator fails a structural requirement."""


class AccuracyInfeasibleError(PhGasError):
    """A quadrature rule cannot meet the requested accuracy."""

    def __init__(self, message, best_residual=float("nan")):
        self.best_residual = best_residual
        super().__init__(message)
