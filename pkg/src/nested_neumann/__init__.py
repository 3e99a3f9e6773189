"""Nested Neumann iterative matrix inversion.

The normalized matrix ``W~ = theta W`` is inverted by repeatedly replacing
``phi`` with ``sum_{n=0}^{L} (I - phi W~)^n phi``.  Depth ``L = 1`` is the
Newton iteration, ``L = 2`` is Chebyshev, and ``i`` nests from ``phi = I``
reproduce a Neumann series of order ``(L+1)^i - 1`` with only ``i(L+1)``
matrix products.
"""

from .core import (
    CSRMatrix,
    OpCounter,
    direct_inverse_oracle,
    identity,
    matmul,
    power_ladder,
    random_matrix,
    random_sparse_spd,
    random_spd,
    rms_residual,
    spectral_norm_estimate,
)
from .cost import (
    BudgetAnalysis,
    CostEstimate,
    Formula,
    budget_order,
    cost_factorized,
    cost_factorized_sparse_stored,
    cost_nn,
    cost_nn_explicit_sparse,
    optimal_depth,
)
from .estimators import NestedNeumannInverse, NeumannRegressor
from .exceptions import (
    BudgetError,
    ContractionError,
    DegenerateProbeError,
    DivergenceError,
    DomainError,
    EstimationError,
    NestedNeumannError,
    NonConvergenceError,
    NonFiniteError,
    NotPSDError,
    PlanError,
    ShapeError,
    SingularMatrixError,
)
from .factorized import (
    CnsConfig,
    FactorizedPlan,
    LinearSystem,
    PlanMode,
    cns_invert,
    ns_factorized,
    solve_normal_equations,
    solve_sparse_factorized,
)
from .preconditioning import Normalization, ThetaKind, contraction_check, normalize, theta_power, theta_trace
from .solver import (
    ConvergenceReport,
    SolverConfig,
    StopReason,
    chebyshev_step,
    convergence_order_estimate,
    equivalent_ns_order,
    estimate_nests,
    newton_step,
    nn_explicit,
    nn_invert,
    nn_iterate,
    nn_step,
    ns_sum,
)

__version__ = "0.1.0"
