class HamlockError(Exception):
    """Base class for errors raised by hamlock."""


class ModelError(HamlockError, ValueError):
    """A system model violates a structural requirement."""


class SolverError(HamlockError, RuntimeError):
    """A nonlinear or linear solve failed."""


class SeparationError(HamlockError, ValueError):
    """Bump centres are too close, misaligned with the period, or do not fit."""
