"""Exception hierarchy shared by all modules."""


class CavityEdError(Exception):
    """Base class for all package errors."""


class RejectedCell(CavityEdError):
    """Cell vectors violate a cluster constraint (parity, aspect ratio, coloring)."""


class UnknownPreset(CavityEdError):
    """No preset cell is tabulated for the requested (geometry, N)."""


class MissingPoint(CavityEdError):
    """A required reciprocal-space point is not an allowed momentum of the cluster."""


class DimensionOverflow(CavityEdError):
    """Hilbert-space dimension exceeds the configured memory budget."""


class WrongFrame(CavityEdError):
    """Observable is undefined for the frame of the supplied state."""


class WrongGeometry(CavityEdError):
    """Operation requires the other lattice geometry."""


class ManifoldOverflow(CavityEdError):
    """Classical ground-state manifold exceeds the configured budget."""


class NoConvergence(CavityEdError):
    """Iterative solve hit max_iter; carries the best Ritz pair found so far."""

    def __init__(self, message, energy=None, state=None, residual=None):
        super().__init__(message)
        self.energy = energy
        self.state = state
        self.residual = residual


class NoInteriorPeak(CavityEdError):
    """Requested extremum sits on a grid edge or does not exist."""


class BudgetExceeded(CavityEdError):
    """Cutoff-doubling protocol ran out of budget; carries the trace so far."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace if trace is not None else []


class ConfigError(CavityEdError):
    """Invalid run configuration (unknown key, bad value, inconsistent spec)."""
