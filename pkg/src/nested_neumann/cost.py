"""Analytic operation-count models and the fixed-budget depth analysis.

Every count is exact (integers and :class:`~fractions.Fraction`), so solver
runs can be checked against these formulas by equality rather than
tolerance.  Coefficients are in units of ``N^3`` and ``N^2`` operations.
"""

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction

from .factorized import factor_count
from .validation import check_count


class Formula(str, enum.Enum):
    NN_RECURSIVE = "nn_recursive"
    NN_RECURSIVE_BUDGET = "nn_recursive_budget"
    NN_EXPLICIT_SPARSE = "nn_explicit_sparse"
    FACTORIZED_DENSE = "factorized_dense"
    FACTORIZED_SPARSE_STORED = "factorized_sparse_stored"


def _num(x):
    x = Fraction(x)
    return int(x) if x.denominator == 1 else x


@dataclass(frozen=True)
class CostEstimate:
    formula: Formula
    n: int
    n3_coeff: Fraction
    n2_coeff: Fraction
    params: dict = field(default_factory=dict)
    note: str = ""

    @property
    def n3_term(self):
        return _num(self.n3_coeff * self.n ** 3)

    @property
    def n2_term(self):
        return _num(self.n2_coeff * self.n ** 2)

    @property
    def total(self):
        return _num(self.n3_term + self.n2_term)

    def as_row(self):
        return {
            "formula": self.formula.value,
            "params": ";".join(f"{k}={v}" for k, v in self.params.items()),
            "n3_coeff": str(_num(self.n3_coeff)),
            "n2_coeff": str(_num(self.n2_coeff)),
            "n3_term": str(self.n3_term),
            "n2_term": str(self.n2_term),
            "total": str(self.total),
            "note": self.note,
        }


def cost_nn(i, L, n, budget_variant=False):
    """Recursive nested Neumann: ``i(L+1) N^3 + (i+1)(L+1) N^2``.

    With ``budget_variant=True`` the ``N^2`` coefficient is ``i(L+1)``, the
    form used in the fixed-budget analysis.  Only the ``N^3`` coefficient is
    meant to match instrumented runs.
    """
    i, L, n = check_count(i, "i"), check_count(L, "L"), check_count(n, "n", minimum=1)
    n2 = i * (L + 1) if budget_variant else (i + 1) * (L + 1)
    formula = Formula.NN_RECURSIVE_BUDGET if budget_variant else Formula.NN_RECURSIVE
    return CostEstimate(formula, n, Fraction(i * (L + 1)), Fraction(n2), {"i": i, "L": L, "N": n})


def cost_nn_explicit_sparse(i, L, n):
    """Storage-free explicit form with ``gamma = (L+1)^(i+1) - 1``.

    ``(L/2)[i l (l+1) + 1] N^3 + [2 i l + 1] N^3`` where ``l = log_{L+1}(gamma+1)
    = i + 1`` exactly.  Both terms carry ``N^3``; the second looks like an
    ``N^2`` term but the formula is evaluated literally.
    """
    i, L, n = check_count(i, "i"), check_count(L, "L", minimum=1), check_count(n, "n", minimum=1)
    levels = i + 1
    first = Fraction(L, 2) * (i * levels * (levels + 1) + 1)
    second = Fraction(2 * i * levels + 1)
    gamma = (L + 1) ** levels - 1
    return CostEstimate(
        Formula.NN_EXPLICIT_SPARSE, n, first + second, Fraction(0),
        {"i": i, "L": L, "gamma": gamma, "N": n},
        note="literal formula; both terms N^3; not matched to instrumented counts",
    )


def cost_factorized(gamma, n):
    """Stored dense factorization: ``2 s N^3 + (s + 1) N^2`` with ``s = log2(gamma+1)``."""
    s = factor_count(gamma)
    n = check_count(n, "n", minimum=1)
    return CostEstimate(Formula.FACTORIZED_DENSE, n, Fraction(2 * s), Fraction(s + 1),
                        {"gamma": gamma, "N": n})


def cost_factorized_sparse_stored(gamma, n):
    """Only ``P`` stored: ``[(s^2 + s - 1)/2] N^3 + s^2 N^2`` with ``s = log2(gamma+1)``."""
    s = factor_count(gamma)
    n = check_count(n, "n", minimum=1)
    return CostEstimate(Formula.FACTORIZED_SPARSE_STORED, n, Fraction(s * s + s - 1, 2),
                        Fraction(s * s), {"gamma": gamma, "N": n})


def budget_order(budget_k, L):
    """Order ``(L+1)^(i+1) - 1`` reachable with ``i = floor(K / (L+1))`` nests."""
    budget_k = check_count(budget_k, "budget_k")
    L = check_count(L, "L", minimum=1)
    return (L + 1) ** (budget_k // (L + 1) + 1) - 1


@dataclass(frozen=True)
class BudgetAnalysis:
    budget_k: int
    per_depth: list
    argmax_L: int
    log_objective: dict


def optimal_depth(budget_k, L_max=8):
    """Depth maximizing ``(K/(L+1) + 1) ln(L+1)`` over ``1 <= L <= L_max``.

    Ties go to the smaller depth, which needs less storage.  ``per_depth``
    lists ``(L, budget_order(K, L))``.
    """
    budget_k = check_count(budget_k, "budget_k", minimum=2)
    L_max = check_count(L_max, "L_max", minimum=1)
    objective = {}
    for L in range(1, L_max + 1):
        objective[L] = float(Fraction(budget_k, L + 1) + 1) * math.log(L + 1)
    best = max(objective.values())
    argmax = min(L for L, v in objective.items() if v == best)
    per_depth = [(L, budget_order(budget_k, L)) for L in objective]
    return BudgetAnalysis(budget_k, per_depth, argmax, objective)
