"""Exception types raised by the solvers and the config layer."""

from __future__ import annotations


class NonlocalDesignError(Exception):
    """Base class for all package errors."""


class ConfigurationError(NonlocalDesignError, ValueError):
    """Invalid grid/design configuration (e.g. non-commensurate cells)."""


class ParameterError(NonlocalDesignError, ValueError):
    """A numeric parameter lies outside its admissible range."""


class ShapeError(NonlocalDesignError, ValueError):
    """Array length does not match the grid."""


class ConstraintError(NonlocalDesignError, ValueError):
    """Obstacle set is empty or covers the whole domain."""


class BudgetExceededError(NonlocalDesignError, ValueError):
    """Exhaustive enumeration would exceed the combinatorial budget."""

    def __init__(self, count: int, budget: int):
        self.count = count
        self.budget = budget
        super().__init__(
            f"exhaustive search needs {count} designs, budget is {budget}; "
            "reduce the cell count or change alpha"
        )


class ConvergenceError(NonlocalDesignError, RuntimeError):
    """Iterative solver stopped without meeting its tolerances.

    The last iterate is kept on ``u`` and ``lam`` so callers can inspect it.
    """

    def __init__(self, message: str, u=None, lam: float | None = None, iterations: int = 0):
        super().__init__(message)
        self.u = u
        self.lam = lam
        self.iterations = iterations
