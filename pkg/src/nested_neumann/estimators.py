"""scikit-learn compatible front ends.

:class:`NestedNeumannInverse` fits the inverse of a square PSD matrix and
maps sample rows through it.  :class:`NeumannRegressor` solves least squares
through the normal equations, so it drops into pipelines wherever a linear
model without intercept would.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .factorized import LinearSystem, solve_normal_equations
from .preconditioning import theta_power, theta_trace
from .solver import SolverConfig, nn_invert
from .validation import as_matrix, maybe_real


def _config(est):
    return SolverConfig(depth=est.depth, max_nests=est.max_nests, tol=est.tol)


class NestedNeumannInverse(TransformerMixin, BaseEstimator):
    """Iterative inverse of a square positive semi-definite matrix.

    Parameters
    ----------
    depth : int, default=2
        Inception depth ``L``; 1 is Newton, 2 is Chebyshev.
    max_nests : int, default=100
    tol : float, default=1e-10
        Stop once ``||I - phi W~||_F / sqrt(N)`` falls below this.
    theta : {"trace", "power"}, default="trace"
        Scalar normalization.  ``"power"`` falls back to ``"trace"`` when it
        does not contract.
    power_k : int, default=8
        Power order for ``theta="power"``.
    seed : int, default=0
        Probe seed for ``theta="power"``.

    Attributes
    ----------
    inverse_ : ndarray of shape (N, N)
    matrix_ : ndarray of shape (N, N)
        The fitted matrix ``W``.
    normalization_ : Normalization
    report_ : ConvergenceReport
    n_nests_ : int
    """

    def __init__(self, depth=2, max_nests=100, tol=1e-10, theta="trace", power_k=8, seed=0):
        self.depth = depth
        self.max_nests = max_nests
        self.tol = tol
        self.theta = theta
        self.power_k = power_k
        self.seed = seed

    def fit(self, X, y=None):
        w = as_matrix(X, "X", square=True)
        if self.theta == "trace":
            norm = theta_trace(w)
        elif self.theta == "power":
            norm = theta_power(w, self.power_k, self.seed)
            if not norm.valid:
                norm = theta_trace(w)
        else:
            raise ValueError(f"theta must be 'trace' or 'power', got {self.theta!r}")
        inverse, report = nn_invert(w, norm, _config(self))
        self._complex = bool(np.any(np.imag(X)))
        self.inverse_ = inverse if self._complex else np.ascontiguousarray(inverse.real)
        self.matrix_ = w if self._complex else np.ascontiguousarray(w.real)
        self.normalization_ = norm
        self.report_ = report
        self.n_nests_ = report.nests
        self.n_features_in_ = w.shape[1]
        return self

    def transform(self, X):
        """Return ``X @ W^{-1}`` (each row mapped through the fitted inverse)."""
        check_is_fitted(self, "inverse_")
        X = np.asarray(X)
        return X @ self.inverse_

    def inverse_transform(self, X):
        """Return ``X @ W``, undoing :meth:`transform`."""
        check_is_fitted(self, "matrix_")
        return np.asarray(X) @ self.matrix_

    def solve(self, B):
        """``W^{-1} B`` for a right-hand side block ``B``."""
        check_is_fitted(self, "inverse_")
        return self.inverse_ @ np.asarray(B)


class NeumannRegressor(RegressorMixin, BaseEstimator):
    """Least squares ``min ||X c - y||`` via nested Neumann normal equations.

    No intercept is fitted; center the data or add a constant column.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,) or (n_targets, n_features)
    report_ : ConvergenceReport
    """

    def __init__(self, depth=2, max_nests=100, tol=1e-10):
        self.depth = depth
        self.max_nests = max_nests
        self.tol = tol

    def fit(self, X, y):
        X_arr = as_matrix(X, "X")
        y_arr = np.asarray(y)
        single = y_arr.ndim == 1
        x, report = solve_normal_equations(LinearSystem(X_arr, y_arr), _config(self))
        if not (np.iscomplexobj(X) or np.iscomplexobj(y)):
            x = maybe_real(x, atol=np.inf)
        self.coef_ = x[:, 0] if single else x.T
        self.report_ = report
        self.n_features_in_ = X_arr.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return np.asarray(X) @ self.coef_.T
