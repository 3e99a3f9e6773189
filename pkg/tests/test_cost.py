import math
from fractions import Fraction

import numpy as np
import pytest

from nested_neumann import (
    FactorizedPlan,
    Formula,
    OpCounter,
    budget_order,
    cost_factorized,
    cost_factorized_sparse_stored,
    cost_nn,
    cost_nn_explicit_sparse,
    normalize,
    ns_factorized,
    nn_iterate,
    optimal_depth,
    random_spd,
    theta_trace,
)
from nested_neumann.exceptions import PlanError


class TestNestedCost:
    def test_no_nests(self):
        assert cost_nn(0, 2, 10).n3_term == 0

    def test_worked_value(self):
        est = cost_nn(2, 2, 10)
        assert (est.n3_term, est.n2_term, est.total) == (6000, 900, 6900)
        assert est.formula is Formula.NN_RECURSIVE

    def test_budget_variant(self):
        est = cost_nn(2, 2, 10, budget_variant=True)
        assert est.n2_coeff == 6 and est.formula is Formula.NN_RECURSIVE_BUDGET

    @pytest.mark.parametrize("i,L", [(1, 1), (3, 2), (4, 3), (2, 6)])
    def test_matches_instrumented(self, i, L):
        w = random_spd(6, 10.0, 0)
        counter = OpCounter()
        nn_iterate(normalize(w, theta_trace(w)), L, i, counter)
        assert counter.n3_multiplies == cost_nn(i, L, 6).n3_coeff

    def test_validation(self):
        with pytest.raises(ValueError):
            cost_nn(-1, 2, 10)
        with pytest.raises(ValueError):
            cost_nn(1, 2, 0)


class TestExplicitCost:
    def test_single_level(self):
        assert cost_nn_explicit_sparse(0, 1, 1).n3_coeff == Fraction(3, 2)

    def test_worked_value(self):
        est = cost_nn_explicit_sparse(2, 2, 10)
        assert est.n3_coeff == 25 + 13
        assert est.n3_term == 38000 and est.n2_term == 0
        assert est.params["gamma"] == 26

    def test_exact_for_large_inputs(self):
        est = cost_nn_explicit_sparse(40, 7, 10 ** 6)
        assert isinstance(est.n3_term, int)


class TestFactorizedCost:
    def test_gamma_one(self):
        est = cost_factorized(1, 5)
        assert (est.n3_coeff, est.n2_coeff) == (2, 2)

    def test_worked_value(self):
        assert cost_factorized(15, 8).total == 4416

    def test_two_to_the_fifty(self):
        assert cost_factorized(2 ** 50 - 1, 1).n3_coeff == 100

    @pytest.mark.parametrize("gamma", [1, 3, 7, 15, 31])
    def test_matches_instrumented(self, gamma):
        w = random_spd(6, 10.0, 1)
        counter = OpCounter()
        ns_factorized(np.eye(6), normalize(w, theta_trace(w)), FactorizedPlan(gamma), counter)
        assert counter.n3_multiplies == cost_factorized(gamma, 6).n3_coeff

    @pytest.mark.parametrize("gamma,n3,n2", [(1, Fraction(1, 2), 1), (7, Fraction(11, 2), 9)])
    def test_sparse_stored(self, gamma, n3, n2):
        est = cost_factorized_sparse_stored(gamma, 2)
        assert (est.n3_coeff, est.n2_coeff) == (n3, n2)
        assert est.n3_term == n3 * 8

    def test_bad_gamma(self):
        with pytest.raises(PlanError):
            cost_factorized(6, 4)
        with pytest.raises(PlanError):
            cost_factorized_sparse_stored(0, 4)

    def test_row(self):
        row = cost_factorized_sparse_stored(1, 3).as_row()
        assert row["formula"] == "factorized_sparse_stored"
        assert row["n3_coeff"] == "1/2" and row["n3_term"] == "27/2"


class TestBudget:
    @pytest.mark.parametrize("L,order", [(1, 127), (2, 242), (3, 255)])
    def test_budget_order(self, L, order):
        assert budget_order(12, L) == order

    def test_budget_600(self):
        analysis = optimal_depth(600, 6)
        assert analysis.argmax_L == 2
        assert analysis.log_objective[1] == pytest.approx(301 * math.log(2))
        assert analysis.log_objective[2] == pytest.approx(201 * math.log(3))
        assert analysis.log_objective[3] == pytest.approx(151 * math.log(4))

    def test_budget_60(self):
        analysis = optimal_depth(60)
        assert analysis.argmax_L == 2
        assert max(analysis.log_objective.values()) == pytest.approx(21 * math.log(3))

    def test_small_budget(self):
        analysis = optimal_depth(12, 4)
        assert analysis.argmax_L == 3
        assert dict(analysis.per_depth)[3] == 255 > dict(analysis.per_depth)[2]

    def test_tends_to_e(self):
        analysis = optimal_depth(10 ** 7, 10)
        assert analysis.argmax_L + 1 in (2, 3)

    def test_validation(self):
        with pytest.raises(ValueError):
            optimal_depth(1)
        with pytest.raises(ValueError):
            budget_order(10, 0)
