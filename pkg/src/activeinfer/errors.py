"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration problems exit 2, data
problems exit 3, numerical failures exit 4.
"""


class ConfigError(ValueError):
    """Bad configuration: unknown keys, out-of-range settings, missing files."""


class DataError(ValueError):
    """Input data violates a contract (wrong length, missing label, bad schema)."""


class ParseError(DataError):
    """Malformed file content. Message carries the 1-based line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InsufficientDataError(DataError):
    """Not enough observations to carry out the computation."""


class DegenerateInputError(DataError):
    """Input is degenerate: all-zero uncertainties, zero spread, zero weight."""


class InvalidPlanError(DataError):
    """A sampling plan is internally inconsistent (e.g. a label drawn at zero propensity)."""


class StateError(RuntimeError):
    """Operation called on an object in the wrong state (e.g. predict before fit)."""


class NumericalError(RuntimeError):
    """Base for numerical failures."""


class SolverError(NumericalError):
    """Iterative solver failed to converge. Carries the last iterate and gradient norm."""

    def __init__(self, message, last_iterate=None, grad_norm=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.grad_norm = grad_norm


class SingularDesignError(NumericalError):
    """A design or Hessian matrix is singular where invertibility is required."""
