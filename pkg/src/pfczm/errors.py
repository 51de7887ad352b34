"""Exception types shared across the package."""


class PfczmError(Exception):
    """Base class for all package errors."""


class MeshError(PfczmError):
    """Malformed or unsupported mesh data."""


class ConfigError(PfczmError):
    """Invalid or inconsistent configuration."""


class SolverError(PfczmError):
    """A solve did not converge or hit an inconsistent state."""


class QPConvergenceError(SolverError):
    """Quadratic program solver failure (budget exhausted, indefinite, infeasible)."""
