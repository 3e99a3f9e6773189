"""Factorized Neumann series, sparse and normal-equation solves, and the
Chebyshev-Neumann hybrid."""

import enum
from dataclasses import dataclass

import numpy as np

from .core import CSRMatrix, OpCounter, frobenius_norm, identity, matmul, spmv_block
from .exceptions import (
    ContractionError,
    DivergenceError,
    NonConvergenceError,
    NonFiniteError,
    PlanError,
    ShapeError,
)
from .preconditioning import theta_trace
from .solver import SolverConfig, StopReason, chebyshev_step, nn_invert, ns_sum
from .validation import as_matrix, check_count, check_finite, check_same_square


class PlanMode(str, enum.Enum):
    DENSE_STORED = "dense"
    SPARSE_MATRIX_FREE = "sparse"


def factor_count(gamma):
    """``log2(gamma + 1)``; raises :class:`PlanError` unless it is a positive integer."""
    if isinstance(gamma, bool) or not isinstance(gamma, (int, np.integer)):
        raise PlanError(f"gamma must be an integer, got {gamma!r}")
    gamma = int(gamma)
    if gamma < 1 or (gamma + 1) & gamma:
        raise PlanError(f"gamma + 1 must be a power of two >= 2, got gamma={gamma}")
    return (gamma + 1).bit_length() - 1


@dataclass(frozen=True)
class FactorizedPlan:
    """Target Neumann order ``gamma = 2**num_factors - 1``."""

    gamma: int
    mode: PlanMode = PlanMode.DENSE_STORED

    def __post_init__(self):
        factor_count(self.gamma)

    @property
    def num_factors(self):
        return factor_count(self.gamma)

    @classmethod
    def from_factors(cls, num_factors, mode=PlanMode.DENSE_STORED):
        num_factors = check_count(num_factors, "num_factors", minimum=1)
        return cls(2 ** num_factors - 1, mode)


@dataclass
class LinearSystem:
    """``A x = B`` with ``A`` dense or CSR and ``B`` an ``N x k`` block."""

    a: object
    b: np.ndarray
    hermitian_normal: bool = False

    def __post_init__(self):
        if not isinstance(self.a, CSRMatrix):
            self.a = as_matrix(self.a, "A")
        self.b = as_matrix(self.b, "B", allow_vector=True)
        if self.b.shape[0] != self.a.shape[0]:
            raise ShapeError(f"B has {self.b.shape[0]} rows but A has {self.a.shape[0]}")

    @property
    def is_sparse(self):
        return isinstance(self.a, CSRMatrix)


@dataclass(frozen=True)
class CnsConfig:
    """Chebyshev-Neumann hybrid settings.

    ``ci_iterations = i`` runs ``i + 1`` Chebyshev steps from ``phi = I``
    (a Neumann preconditioner of order ``3**(i+1) - 1``); ``ns_terms = T`` is the
    order of the outer series built on it.
    """

    ci_iterations: int = 1
    ns_terms: int = 1
    factorize_outer: bool = False

    def __post_init__(self):
        check_count(self.ci_iterations, "ci_iterations", minimum=0)
        check_count(self.ns_terms, "ns_terms", minimum=1)


def ns_factorized(phi, w_tilde, plan, counter=None):
    """``prod_{n=0}^{s-1} (I + P^{2^n}) phi`` with ``P = I - phi W~``, ``s = log2(gamma+1)``.

    Equals the order-``gamma`` Neumann series.  Uses exactly ``2 s`` products:
    one to form ``P``, ``s - 1`` squarings, ``s - 1`` accumulator products and
    the trailing ``phi``.
    """
    if not isinstance(plan, FactorizedPlan):
        plan = FactorizedPlan(plan)
    if plan.mode is not PlanMode.DENSE_STORED:
        raise PlanError("ns_factorized needs a dense plan; use solve_sparse_factorized")
    phi = as_matrix(phi, "phi")
    w_tilde = as_matrix(w_tilde, "w_tilde")
    check_same_square(phi, w_tilde, ("phi", "w_tilde"))
    eye = identity(phi.shape[0])
    p = eye - matmul(phi, w_tilde, counter)
    acc = eye + p
    power = p
    for _ in range(plan.num_factors - 1):
        power = matmul(power, power, counter)
        acc = matmul(acc, eye + power, counter)
    if counter is not None:
        counter.add_n2(1 + plan.num_factors)
    return matmul(acc, phi, counter)


def solve_normal_equations(system, config=None, counter=None):
    """Solve ``A x = B`` through ``x = (A* A)^{-1} A* B``.

    ``W = A* A`` is Hermitian PSD by construction and normalized with
    ``theta = 1 / Tr(W)``; the inverse comes from :func:`nn_invert`.

    Returns
    -------
    x : ndarray
    report : ConvergenceReport
        ``backward_residual`` holds ``||A*A x - A*B||_F / ||A*B||_F``.

    Raises
    ------
    NonConvergenceError
        When the nest budget runs out before the tolerance is met.
    """
    config = config or SolverConfig()
    counter = counter if counter is not None else OpCounter()
    a = system.a.to_dense() if system.is_sparse else system.a
    ah = np.ascontiguousarray(a.conj().T)
    start_n3 = counter.n3_multiplies
    w = matmul(ah, a, counter)
    w = 0.5 * (w + w.conj().T)
    system.hermitian_normal = True
    inverse, report = nn_invert(w, theta_trace(w), config, counter)
    ahb = matmul(ah, system.b, counter)
    x = matmul(inverse, ahb, counter)
    scale = frobenius_norm(ahb) or 1.0
    report.backward_residual = frobenius_norm(matmul(w, x) - ahb) / scale
    report.n3_multiplies = counter.n3_multiplies - start_n3
    if report.stopped_reason is StopReason.MAX_NESTS:
        raise NonConvergenceError(
            f"residual {report.final_epsilon:.3e} above tol {config.tol:.1e} "
            f"after {report.nests} nests", report)
    return x, report


def solve_sparse_factorized(system, gamma, norm, counter=None):
    """Matrix-free factorized series ``x = theta prod_n (I + P^{2^n}) B``, ``P = I - theta A``.

    ``P`` is never formed or squared: ``P^{2^n} Z`` is built from ``2^n``
    successive applications ``Y <- Y - theta (A Y)``.  Total sparse
    applications are ``gamma`` per right-hand-side column.
    """
    if not system.is_sparse:
        raise ShapeError("solve_sparse_factorized needs a CSR matrix; see ns_factorized")
    if not norm.valid:
        raise ContractionError(
            f"normalization does not contract (||I - theta A||_2 ~ {norm.contraction_norm:.6g})"
        )
    plan = FactorizedPlan(gamma, PlanMode.SPARSE_MATRIX_FREE)
    a = system.a
    if a.shape[0] != a.shape[1]:
        raise ShapeError(f"A must be square, got {a.shape}")
    theta = norm.theta
    z = system.b.copy()
    for n in range(plan.num_factors):
        y = z
        for _ in range(2 ** n):
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    y = y - theta * spmv_block(a, y, counter)
                check_finite(y)
            except NonFiniteError as exc:
                raise DivergenceError(n, "sparse series diverged; contraction violated") from exc
        with np.errstate(over="ignore", invalid="ignore"):
            z = z + y
        if not np.isfinite(z).all():
            raise DivergenceError(n, "sparse series diverged; contraction violated")
        if counter is not None:
            counter.add_n2(2 ** n + 1)
    return theta * z


def cns_effective_order(ci_iterations, ns_terms):
    """Neumann order ``3^(i+1) (T+1) - 1`` realized by :func:`cns_invert`."""
    ci_iterations = check_count(ci_iterations, "ci_iterations")
    ns_terms = check_count(ns_terms, "ns_terms", minimum=1)
    return 3 ** (ci_iterations + 1) * (ns_terms + 1) - 1


def cns_invert(w_tilde, cns, counter=None):
    """Chebyshev-Neumann hybrid inverse of ``W~``.

    A few Chebyshev steps from ``phi = I`` build the preconditioner, which
    then seeds an outer Neumann series of ``cns.ns_terms`` terms (factorized
    when requested and ``T + 1`` is a power of two).
    """
    w_tilde = as_matrix(w_tilde, "w_tilde", square=True)
    phi = identity(w_tilde.shape[0])
    for _ in range(cns.ci_iterations + 1):
        phi = chebyshev_step(phi, w_tilde, counter)
    terms = cns.ns_terms
    if cns.factorize_outer and (terms + 1) & terms == 0:
        return ns_factorized(phi, w_tilde, FactorizedPlan(terms), counter)
    return ns_sum(phi, w_tilde, terms, counter)


def densified_factorized_solve(system, gamma, norm, counter=None):
    """Dense counterpart of :func:`solve_sparse_factorized` (stored ``P``)."""
    a = system.a.to_dense() if system.is_sparse else system.a
    n = a.shape[0]
    series = ns_factorized(identity(n), norm.theta * a, FactorizedPlan(gamma), counter)
    return norm.theta * matmul(series, system.b, counter)

