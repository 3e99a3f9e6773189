"""Method dispatch shared by the ``invert`` and ``bench`` commands.

Every method is run from the same normalized matrix ``W~`` and returns an
approximate inverse of ``W~`` together with instrumented counts, so methods
can be compared row by row.
"""

import enum
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import cost
from .core import CSRMatrix, OpCounter, apply, frobenius_norm, identity, rms_residual
from .exceptions import DivergenceError, EstimationError, NonFiniteError
from .factorized import (
    CnsConfig,
    FactorizedPlan,
    LinearSystem,
    cns_effective_order,
    cns_invert,
    ns_factorized,
    solve_sparse_factorized,
)
from .preconditioning import normalize
from .solver import (
    StopReason,
    chebyshev_step,
    convergence_order_estimate,
    iter_nests,
    newton_step,
    nn_explicit,
    ns_sum,
)
from .validation import check_count


class Method(str, enum.Enum):
    NS = "ns"
    NEWTON = "newton"
    CHEBYSHEV = "chebyshev"
    NN = "nn"
    NN_EXPLICIT = "nn-explicit"
    FACTORIZED_NS = "factorized-ns"
    CNS = "cns"
    SPARSE_FACTORIZED = "sparse-factorized"


@dataclass
class MethodResult:
    phi: np.ndarray
    history: list
    counter: OpCounter
    gamma_effective: int
    predicted_n3: object
    stopped_reason: StopReason
    depth: int = None
    nests: int = None

    @property
    def epsilon(self):
        return self.history[-1][1]

    def alpha(self):
        try:
            return convergence_order_estimate(self.history)
        except EstimationError:
            return None


def _fixed(phi, w_tilde, tol, counter, gamma, predicted, **extra):
    eps = rms_residual(phi, w_tilde)
    reason = StopReason.TOLERANCE if eps < tol else StopReason.MAX_NESTS
    return MethodResult(phi, [(1, eps)], counter, gamma, predicted, reason, **extra)


def _nested(w_tilde, depth, nests, tol, counter, step=None):
    """Nest until ``eps < tol`` or ``nests`` nests; ``nests=None`` means 100."""
    budget = 100 if nests is None else nests
    history = []
    reason = StopReason.MAX_NESTS
    if step is None:
        for state in iter_nests(w_tilde, depth, counter):
            history.append((state.nest_index, state.epsilon))
            if state.epsilon < tol:
                reason = StopReason.TOLERANCE
                break
            if state.nest_index >= budget:
                break
        phi = state.phi
    else:
        phi = identity(w_tilde.shape[0])
        for index in range(budget + 1):
            eps = rms_residual(phi, w_tilde)
            history.append((index, eps))
            if eps < tol:
                reason = StopReason.TOLERANCE
                break
            if index == budget:
                break
            try:
                phi = step(phi, w_tilde, counter)
            except NonFiniteError as exc:
                raise DivergenceError(index + 1) from exc
    done = history[-1][0]
    return MethodResult(phi, history, counter, (depth + 1) ** done - 1,
                        cost.cost_nn(done, depth, 1).n3_coeff, reason, depth=depth, nests=done)


def run_method(method, w, norm, *, depth=2, nests=None, order=None, gamma=None,
               ci_iterations=1, ns_terms=1, tol=1e-10, rhs=None, seed=0):
    """Run one method on ``W~ = theta W`` and return a :class:`MethodResult`.

    ``MethodResult.phi`` approximates ``W~^{-1}``; multiply by ``norm.theta``
    for ``W^{-1}``.

    ``nests`` counts nests actually taken, so ``phi^(nests)`` is a Neumann
    series of order ``(L+1)**nests - 1`` for the nested methods.

    ``w`` may be a :class:`CSRMatrix`; only ``sparse-factorized`` keeps it
    sparse.  For that method ``rhs = k`` solves against a seeded ``N x k``
    block instead of ``I``; ``phi`` is then the solution block and
    ``epsilon`` the relative residual ``||A X - B||_F / ||B||_F``.
    """
    method = Method(method)
    counter = OpCounter()
    dense_w = w.to_dense() if isinstance(w, CSRMatrix) else w
    w_tilde = normalize(dense_w, norm)
    n = w_tilde.shape[0]
    eye = identity(n)
    if method is Method.NN:
        return _nested(w_tilde, depth, nests, tol, counter)
    if method is Method.NEWTON:
        return _nested(w_tilde, 1, nests, tol, counter, step=newton_step)
    if method is Method.CHEBYSHEV:
        return _nested(w_tilde, 2, nests, tol, counter, step=chebyshev_step)
    if method is Method.NS:
        if order is None:
            if nests is None:
                raise ValueError("ns needs --order or --nests")
            order = (depth + 1) ** nests - 1
        phi = ns_sum(eye, w_tilde, order, counter)
        return _fixed(phi, w_tilde, tol, counter, order, order + 1 if order else 0,
                      depth=depth, nests=nests)
    if method is Method.NN_EXPLICIT:
        if not nests:
            raise ValueError("nn-explicit needs --nests >= 1")
        phi = nn_explicit(eye, w_tilde, nests - 1, depth, counter)
        predicted = cost.cost_nn_explicit_sparse(nests - 1, depth, 1).n3_coeff
        return _fixed(phi, w_tilde, tol, counter, (depth + 1) ** nests - 1, predicted,
                      depth=depth, nests=nests)
    if method is Method.FACTORIZED_NS:
        if gamma is None:
            raise ValueError("factorized-ns needs --gamma")
        phi = ns_factorized(eye, w_tilde, FactorizedPlan(gamma), counter)
        return _fixed(phi, w_tilde, tol, counter, gamma, cost.cost_factorized(gamma, 1).n3_coeff)
    if method is Method.CNS:
        cfg = CnsConfig(ci_iterations, ns_terms)
        phi = cns_invert(w_tilde, cfg, counter)
        predicted = 3 * (ci_iterations + 1) + ns_terms + 1
        return _fixed(phi, w_tilde, tol, counter, cns_effective_order(ci_iterations, ns_terms),
                      predicted)
    if method is Method.SPARSE_FACTORIZED:
        if gamma is None:
            raise ValueError("sparse-factorized needs --gamma")
        a = w if isinstance(w, CSRMatrix) else CSRMatrix.from_dense(w)
        predicted = cost.cost_factorized_sparse_stored(gamma, 1).n3_coeff
        if rhs is None:
            inverse = solve_sparse_factorized(LinearSystem(a, eye), gamma, norm, counter)
            return _fixed(inverse / norm.theta, w_tilde, tol, counter, gamma, predicted)
        rng = np.random.default_rng(seed)
        b = rng.standard_normal((n, check_count(rhs, "rhs", minimum=1))).astype(np.complex128)
        x = solve_sparse_factorized(LinearSystem(a, b), gamma, norm, counter)
        eps = relative_residual(a, x, b)
        reason = StopReason.TOLERANCE if eps < tol else StopReason.MAX_NESTS
        return MethodResult(x, [(1, eps)], counter, gamma, predicted, reason)
    raise ValueError(f"unknown method {method}")


def relative_residual(a, x, b):
    return frobenius_norm(apply(a, x) - b) / (frobenius_norm(b) or 1.0)


def count_str(value):
    if value is None:
        return ""
    value = Fraction(value)
    return str(int(value)) if value.denominator == 1 else str(float(value))


def float_str(value):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return repr(float(value))
