"""Exception hierarchy shared by all modules."""


class KramersError(Exception):
    """Base class for every error raised by this package."""


# potential
class NoConvergence(KramersError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


class NotCritical(KramersError):
    pass


# domain
class DimensionUnsupported(KramersError):
    pass


class TraceFailure(KramersError):
    pass


class DegenerateGradient(KramersError):
    pass


# eikonal coordinates
class HamiltonianDrift(KramersError):
    pass


class LeftTube(KramersError):
    pass


class RayCrossing(KramersError):
    pass


class MonotonicityFailure(KramersError):
    pass


# asymptotics
class NotConstantBoundary(KramersError):
    pass


class DegenerateBoundaryMinimum(KramersError):
    pass


class InconsistentMinima(KramersError):
    pass


# capacity
class ChartMismatch(KramersError):
    pass


class NonpositiveChi(KramersError):
    pass


class InvalidCapacitor(KramersError):
    pass


# Monte Carlo
class SimulationError(KramersError):
    pass


class AllCensored(SimulationError):
    pass


class ExcessiveCensoring(SimulationError):
    pass


class NaNState(SimulationError):
    def __init__(self, message, path=None, step=None, seed=None):
        super().__init__(message)
        self.path = path
        self.step = step
        self.seed = seed


# finite differences
class SolverDivergence(KramersError):
    pass


class IterationStall(KramersError):
    pass


class PecletError(KramersError):
    pass


# cli
class ConfigError(KramersError):
    pass
