"""Nested Neumann recursion, Newton and Chebyshev updates, and diagnostics.

Conventions
-----------
``W~`` (``w_tilde``) is the normalized matrix ``theta W`` with
``||I - W~||_2 < 1``.  ``P = I - phi W~`` is the residual of a preconditioner
``phi``; every polynomial is evaluated as ``S(P) phi`` (powers of ``P`` on
the left).  Starting from ``phi = I``, ``i`` nests of depth ``L`` reproduce a
plain Neumann series of order ``(L+1)**i - 1``.
"""

import enum
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import (
    MAX_EXPONENT_BITS,
    OpCounter,
    frobenius_norm,
    identity,
    matmul,
    power_ladder,
)
from .exceptions import (
    BudgetError,
    ContractionError,
    DivergenceError,
    DomainError,
    EstimationError,
    NonFiniteError,
)
from .preconditioning import Normalization, normalize
from .validation import as_matrix, check_count, check_same_square, check_square

# Fitting window for the convergence order: above it the iteration is still
# pre-asymptotic, below it roundoff dominates.
ORDER_WINDOW = (1e-12, 0.5)
MIN_ORDER_POINTS = 4


class StopReason(str, enum.Enum):
    TOLERANCE = "tolerance"
    MAX_NESTS = "max_nests"


@dataclass(frozen=True)
class SolverConfig:
    depth: int = 2
    max_nests: int = 100
    tol: float = 1e-10
    record_history: bool = True

    def __post_init__(self):
        check_count(self.depth, "depth", minimum=0)
        check_count(self.max_nests, "max_nests", minimum=1)
        if not self.tol >= 1e-15:
            raise DomainError(f"tol must be >= 1e-15 (double precision), got {self.tol}")

    def as_dict(self):
        return {"depth": self.depth, "max_nests": self.max_nests, "tol": self.tol,
                "record_history": self.record_history}


@dataclass
class NestState:
    phi: np.ndarray
    nest_index: int
    epsilon: float
    residual: np.ndarray = field(repr=False, default=None)


@dataclass
class ConvergenceReport:
    """Outcome of a solver run; serializes to a stable JSON document."""

    config: dict
    history: list
    n3_multiplies: Fraction
    n2_ops: int
    stopped_reason: StopReason
    spmv_count: int = 0
    check_multiplies: int = 0
    alpha_estimate: float = None
    kappa_used: float = None
    theta: float = None
    backward_residual: float = None

    @property
    def nests(self):
        return self.history[-1][0] if self.history else None

    @property
    def final_epsilon(self):
        return self.history[-1][1] if self.history else None

    def as_dict(self):
        n3 = Fraction(self.n3_multiplies)
        return {
            "config": self.config,
            "history": [[int(i), float(e)] for i, e in self.history],
            "counts": {
                "n3_multiplies": int(n3) if n3.denominator == 1 else float(n3),
                "n2_ops": self.n2_ops,
                "spmv_count": self.spmv_count,
                "check_multiplies": self.check_multiplies,
            },
            "stopped_reason": StopReason(self.stopped_reason).value,
            "alpha_estimate": self.alpha_estimate,
            "kappa_used": self.kappa_used,
            "theta": self.theta,
            "backward_residual": self.backward_residual,
        }

    def to_json(self, **kwargs):
        kwargs.setdefault("indent", 2)
        kwargs.setdefault("sort_keys", True)
        return json.dumps(self.as_dict(), **kwargs)

    @classmethod
    def from_dict(cls, d):
        counts = d["counts"]
        return cls(
            config=d["config"],
            history=[(int(i), float(e)) for i, e in d["history"]],
            n3_multiplies=Fraction(counts["n3_multiplies"]),
            n2_ops=counts["n2_ops"],
            spmv_count=counts.get("spmv_count", 0),
            check_multiplies=counts.get("check_multiplies", 0),
            stopped_reason=StopReason(d["stopped_reason"]),
            alpha_estimate=d.get("alpha_estimate"),
            kappa_used=d.get("kappa_used"),
            theta=d.get("theta"),
            backward_residual=d.get("backward_residual"),
        )


def _tally_n2(counter, amount=1):
    if counter is not None:
        counter.add_n2(amount)


def _series_from_residual(residual, phi, order, counter):
    """``sum_{n=0}^{order} P^n phi`` by Horner, given ``P`` already formed.

    Uses ``order`` products: ``order - 1`` inside the Horner loop and one for
    the trailing ``phi``.
    """
    if order == 0:
        return phi.copy()
    n = residual.shape[0]
    eye = identity(n)
    s = eye + residual
    _tally_n2(counter)
    for _ in range(order - 1):
        s = eye + matmul(residual, s, counter)
        _tally_n2(counter)
    return matmul(s, phi, counter)


def _residual(phi, w_tilde, counter=None):
    r = identity(phi.shape[0]) - matmul(phi, w_tilde, counter)
    _tally_n2(counter)
    return r


def ns_sum(phi0, w_tilde, order, counter=None):
    """Truncated Neumann series ``sum_{n=0}^{order} (I - phi0 W~)^n phi0``.

    ``order + 1`` products for ``order >= 1`` (one to form ``P``, ``order - 1``
    Horner steps and the trailing ``phi0``); ``order = 0`` returns ``phi0``.
    """
    phi0 = as_matrix(phi0, "phi0")
    w_tilde = as_matrix(w_tilde, "w_tilde")
    check_same_square(phi0, w_tilde, ("phi0", "w_tilde"))
    order = check_count(order, "order")
    if order.bit_length() > 64:
        raise BudgetError(f"Horner order {order} is not a usable product count")
    if order == 0:
        return phi0.copy()
    return _series_from_residual(_residual(phi0, w_tilde, counter), phi0, order, counter)


def nn_step(phi, w_tilde, depth, counter=None):
    """One nest: ``phi <- sum_{n=0}^{L} (I - phi W~)^n phi`` with ``L + 1`` products.

    ``depth = 1`` is the Newton update, ``depth = 2`` the Chebyshev update.
    ``depth = 0`` returns ``phi`` unchanged.
    """
    depth = check_count(depth, "depth")
    return ns_sum(phi, w_tilde, depth, counter)


def newton_step(z, w_tilde, counter=None):
    """``Z (2I - W~ Z)``."""
    z = as_matrix(z, "z")
    w_tilde = as_matrix(w_tilde, "w_tilde")
    check_same_square(z, w_tilde, ("z", "w_tilde"))
    y = matmul(w_tilde, z, counter)
    _tally_n2(counter)
    return matmul(z, 2.0 * identity(z.shape[0]) - y, counter)


def chebyshev_step(z, w_tilde, counter=None):
    """``Z [3I - W~ Z (3I - W~ Z)]`` with ``Y = W~ Z`` formed once."""
    z = as_matrix(z, "z")
    w_tilde = as_matrix(w_tilde, "w_tilde")
    check_same_square(z, w_tilde, ("z", "w_tilde"))
    three = 3.0 * identity(z.shape[0])
    y = matmul(w_tilde, z, counter)
    inner = matmul(y, three - y, counter)
    _tally_n2(counter, 2)
    return matmul(z, three - inner, counter)


def iter_nests(w_tilde, depth, counter=None, phi0=None):
    """Yield :class:`NestState` for ``phi^(0), phi^(1), ...`` indefinitely.

    The residual ``P = I - phi W~`` gives both the stopping metric of the
    current iterate and the first product of the next nest, so it is formed
    once.  It is charged to ``counter`` only when the consumer asks for the
    next nest; the final stopping check is therefore not counted.
    """
    w_tilde = as_matrix(w_tilde, "w_tilde")
    check_square(w_tilde, "w_tilde")
    depth = check_count(depth, "depth")
    n = w_tilde.shape[0]
    phi = identity(n) if phi0 is None else as_matrix(phi0, "phi0")
    index = 0
    while True:
        residual = _residual(phi, w_tilde)
        epsilon = frobenius_norm(residual) / math.sqrt(n)
        if not math.isfinite(epsilon):
            raise DivergenceError(index)
        yield NestState(phi, index, epsilon, residual)
        index += 1
        if counter is not None:
            counter.add_n3(1)
            counter.add_n2(1)
        try:
            phi = _series_from_residual(residual, phi, depth, counter)
        except NonFiniteError as exc:
            raise DivergenceError(index) from exc


def nn_iterate(w_tilde, depth, nests, counter=None, phi0=None):
    """Return ``phi^(nests)`` after exactly ``nests`` nests (``nests * (L+1)`` products)."""
    nests = check_count(nests, "nests")
    for state in iter_nests(w_tilde, depth, counter, phi0):
        if state.nest_index == nests:
            return state.phi


def nn_invert(w, norm, config=None, counter=None):
    """Approximate ``W^{-1}`` as ``phi^(i) * theta`` by nested Neumann updates.

    Starts from ``phi^(0) = I`` and nests until the root-mean Frobenius
    residual ``||I - phi W~||_F / sqrt(N)`` drops below ``config.tol`` or
    ``config.max_nests`` nests have been taken.

    Returns
    -------
    inverse : ndarray
    report : ConvergenceReport
        ``n3_multiplies`` covers the nests only (``nests * (L + 1)``); the
        last stopping check is reported as ``check_multiplies``.
    """
    config = config or SolverConfig()
    if not isinstance(norm, Normalization):
        raise TypeError("norm must be a Normalization")
    if not norm.valid:
        raise ContractionError(
            f"normalization does not contract (||I - theta W||_2 ~ {norm.contraction_norm:.6g})"
        )
    w = as_matrix(w, "w", square=True)
    w_tilde = normalize(w, norm)
    counter = counter if counter is not None else OpCounter()
    start_n3 = counter.n3_multiplies
    start_n2 = counter.n2_ops

    history = []
    reason = StopReason.MAX_NESTS
    for state in iter_nests(w_tilde, config.depth, counter):
        if config.record_history:
            history.append((state.nest_index, state.epsilon))
        if state.epsilon < config.tol:
            reason = StopReason.TOLERANCE
            break
        if state.nest_index >= config.max_nests:
            break
    if not config.record_history:
        history = [(state.nest_index, state.epsilon)]

    report = ConvergenceReport(
        config=config.as_dict(),
        history=history,
        n3_multiplies=counter.n3_multiplies - start_n3,
        n2_ops=counter.n2_ops - start_n2,
        stopped_reason=reason,
        check_multiplies=1,
        theta=norm.theta,
    )
    try:
        report.alpha_estimate = convergence_order_estimate(report)
    except EstimationError:
        report.alpha_estimate = None
    return state.phi * norm.theta, report


def nn_explicit(phi0, w_tilde, nests, depth, counter=None):
    """Non-recursive form ``prod_{j=0}^{i} [sum_{n=0}^{L} P^{n (L+1)^j}] phi0``.

    ``P = I - phi0 W~``.  Each inner power ``P^{(L+1)^j}`` is rebuilt from ``P``
    with :func:`power_ladder`, so only ``P`` and the running product are kept.
    The result equals ``phi^(nests + 1)`` of the recursion.
    """
    phi0 = as_matrix(phi0, "phi0")
    w_tilde = as_matrix(w_tilde, "w_tilde")
    check_same_square(phi0, w_tilde, ("phi0", "w_tilde"))
    nests = check_count(nests, "nests")
    depth = check_count(depth, "depth")
    if depth == 0:
        return phi0.copy()
    top_exponent = (depth + 1) ** nests
    if top_exponent.bit_length() > MAX_EXPONENT_BITS:
        raise BudgetError(f"(L+1)^i = {depth + 1}^{nests} exceeds the exponent budget")

    n = phi0.shape[0]
    eye = identity(n)
    p = _residual(phi0, w_tilde, counter)
    product = None
    for j in range(nests + 1):
        q = power_ladder(p, (depth + 1) ** j, counter)
        factor = eye + q
        _tally_n2(counter)
        for _ in range(depth - 1):
            factor = eye + matmul(q, factor, counter)
            _tally_n2(counter)
        product = factor if product is None else matmul(factor, product, counter)
    return matmul(product, phi0, counter)


def equivalent_ns_order(nests, depth):
    """Neumann order ``(L+1)^(i+1) - 1`` reached by ``phi^(i+1)``; exact integer."""
    nests = check_count(nests, "nests")
    depth = check_count(depth, "depth")
    return (depth + 1) ** (nests + 1) - 1


def estimate_nests(kappa, depth):
    """Nest budget ``ceil(log_{L+1}(2 kappa^{2 ln 2}) - 1)``, at least 1.

    Generalizes the Newton bound ``2 log(kappa)`` to depth ``L``.
    """
    if not kappa >= 1:
        raise DomainError(f"kappa must be >= 1, got {kappa}")
    depth = check_count(depth, "depth", minimum=1)
    value = (math.log(2.0) + 2.0 * math.log(2.0) * math.log(kappa)) / math.log(depth + 1) - 1.0
    return max(1, math.ceil(value))


def convergence_order_estimate(report):
    """Least-squares slope of ``log eps_{i+1}`` against ``log eps_i``.

    Only consecutive nests whose residuals both lie strictly inside
    ``ORDER_WINDOW`` are used, and at least ``MIN_ORDER_POINTS`` residuals must
    fall inside the window.  Accepts a :class:`ConvergenceReport` or a plain
    history of ``(nest_index, epsilon)`` pairs.
    """
    history = report.history if isinstance(report, ConvergenceReport) else report
    lo, hi = ORDER_WINDOW
    usable = {int(i): float(e) for i, e in history if lo < e < hi}
    if len(usable) < MIN_ORDER_POINTS:
        raise EstimationError(
            f"need {MIN_ORDER_POINTS} residuals in {ORDER_WINDOW}, found {len(usable)}"
        )
    pairs = [(usable[i], usable[i + 1]) for i in sorted(usable) if i + 1 in usable]
    if len(pairs) < MIN_ORDER_POINTS - 1:
        raise EstimationError("usable residuals are not consecutive")
    x = np.log([a for a, _ in pairs])
    y = np.log([b for _, b in pairs])
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)
