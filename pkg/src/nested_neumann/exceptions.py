"""Exception hierarchy for the nested_neumann package."""


class NestedNeumannError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(NestedNeumannError, ValueError):
    """Operands have incompatible or invalid shapes."""


class DomainError(NestedNeumannError, ValueError):
    """A scalar parameter lies outside its admissible range."""


class NonFiniteError(NestedNeumannError, ArithmeticError):
    """A kernel produced NaN or Inf entries."""


class SingularMatrixError(NestedNeumannError, ArithmeticError):
    def __init__(self, pivot_index, pivot_magnitude, threshold):
        self.pivot_index = pivot_index
        self.pivot_magnitude = pivot_magnitude
        self.threshold = threshold
        super().__init__(
            f"matrix is numerically singular at pivot {pivot_index} "
            f"(|pivot|={pivot_magnitude:.3e} <= {threshold:.3e})"
        )


class NotPSDError(NestedNeumannError, ValueError):
    """Input does not look positive semi-definite (non-positive or complex trace)."""


class DegenerateProbeError(NestedNeumannError, ArithmeticError):
    """The random probe vector was annihilated by repeated application of W."""


class ContractionError(NestedNeumannError, ValueError):
    """A normalization does not satisfy ||I - theta W||_2 < 1."""


class DivergenceError(NestedNeumannError, ArithmeticError):
    def __init__(self, nest_index, message=None):
        self.nest_index = nest_index
        super().__init__(message or f"non-finite iterate produced at nest {nest_index}")


class BudgetError(NestedNeumannError, OverflowError):
    """A requested order or exponent exceeds the supported budget."""


class PlanError(NestedNeumannError, ValueError):
    """A factorization plan is malformed (gamma + 1 is not a power of two)."""


class EstimationError(NestedNeumannError, ValueError):
    """Not enough usable residual history to fit a convergence order."""


class NonConvergenceError(NestedNeumannError, ArithmeticError):
    """The solver exhausted its nest budget; ``report`` carries the history."""

    def __init__(self, message, report):
        self.report = report
        super().__init__(message)
