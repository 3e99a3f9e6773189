"""Dense and sparse matrix kernels, norms, test-matrix generators and oracles.

Matrices are plain ``complex128`` numpy arrays.  The products that the
solvers rely on go through :func:`matmul` / :func:`spmv_block`, which use a
fixed reduction order and report to an optional :class:`OpCounter`.
"""

import math
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

import numpy as np
import scipy.sparse

from . import _kernels
from .exceptions import BudgetError, DomainError, ShapeError, SingularMatrixError
from .validation import as_matrix, check_conforming, check_count, check_finite, check_square

# Largest exponent bit length power_ladder accepts; 2**1024 already has no
# meaning in double precision.
MAX_EXPONENT_BITS = 1024

_kernels.set_workers()


@dataclass
class OpCounter:
    """Tally of matrix-level operations performed during a run.

    ``n3_multiplies`` counts full N x N products (non-square products add the
    equivalent fraction, hence :class:`~fractions.Fraction`).  ``n2_ops`` counts
    matrix additions, scalings and copies.  ``spmv_count`` counts sparse
    applications to individual right-hand-side columns.
    """

    n3_multiplies: Fraction = Fraction(0)
    n2_ops: int = 0
    spmv_count: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def add_n3(self, amount=1):
        with self._lock:
            self.n3_multiplies += Fraction(amount)

    def add_n2(self, amount=1):
        with self._lock:
            self.n2_ops += int(amount)

    def add_spmv(self, amount=1):
        with self._lock:
            self.spmv_count += int(amount)

    def reset(self):
        with self._lock:
            self.n3_multiplies = Fraction(0)
            self.n2_ops = 0
            self.spmv_count = 0

    def as_dict(self):
        n3 = self.n3_multiplies
        return {
            "n3_multiplies": int(n3) if n3.denominator == 1 else float(n3),
            "n2_ops": self.n2_ops,
            "spmv_count": self.spmv_count,
        }


def _tally_n2(counter, amount=1):
    if counter is not None:
        counter.add_n2(amount)


@dataclass(frozen=True, eq=False)
class CSRMatrix:
    """Canonical compressed-sparse-row matrix.

    Column indices are strictly increasing within each row and no explicit
    zeros are stored.  Use :meth:`from_dense` or :meth:`from_scipy` rather than
    the raw constructor unless the arrays are already canonical.
    """

    shape: tuple
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        rows, cols = self.shape
        indptr, indices, data = self.indptr, self.indices, self.data
        if indptr.shape != (rows + 1,):
            raise ShapeError(f"indptr must have length rows+1={rows + 1}")
        if indptr[0] != 0 or indptr[-1] != len(indices) or len(indices) != len(data):
            raise ShapeError("indptr does not match the number of stored entries")
        if np.any(np.diff(indptr) < 0):
            raise ShapeError("indptr must be nondecreasing")
        if len(indices) and (indices.min() < 0 or indices.max() >= cols):
            raise ShapeError("column index out of range")
        for i in range(rows):
            row = indices[indptr[i]:indptr[i + 1]]
            if np.any(np.diff(row) <= 0):
                raise ShapeError(f"column indices of row {i} are not strictly increasing")
        if np.any(data == 0):
            raise ShapeError("explicit zeros are not allowed; use from_scipy to canonicalize")
        check_finite(data, "CSR values")

    @classmethod
    def from_scipy(cls, m):
        m = scipy.sparse.csr_matrix(m, dtype=np.complex128, copy=True)
        m.sum_duplicates()
        m.eliminate_zeros()
        m.sort_indices()
        return cls(
            shape=tuple(int(s) for s in m.shape),
            indptr=np.ascontiguousarray(m.indptr, dtype=np.int64),
            indices=np.ascontiguousarray(m.indices, dtype=np.int64),
            data=np.ascontiguousarray(m.data, dtype=np.complex128),
        )

    @classmethod
    def from_dense(cls, m):
        return cls.from_scipy(scipy.sparse.csr_matrix(as_matrix(m)))

    @classmethod
    def identity(cls, n):
        return cls.from_scipy(scipy.sparse.identity(n, format="csr"))

    @property
    def nnz(self):
        return len(self.data)

    @property
    def density(self):
        return self.nnz / (self.shape[0] * self.shape[1])

    def to_scipy(self):
        return scipy.sparse.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape)

    def to_dense(self):
        return np.ascontiguousarray(self.to_scipy().toarray(), dtype=np.complex128)

    def conj_transpose(self):
        return CSRMatrix.from_scipy(self.to_scipy().conj().T)

    def trace(self):
        return complex(self.to_scipy().diagonal().sum())


def identity(n):
    return np.eye(n, dtype=np.complex128)


def matmul(a, b, counter=None):
    """Product ``a @ b`` with a deterministic ascending-index reduction.

    A square-by-square product of equal size counts as one N^3 multiply; any
    other product counts ``rows * inner * cols / N**3`` with ``N`` the largest
    dimension involved.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    check_conforming(a, b)
    out = _kernels.matmul_into(a, b)
    check_finite(out, "matmul result")
    if counter is not None:
        rows, inner = a.shape
        cols = b.shape[1]
        if rows == inner == cols:
            counter.add_n3(1)
        else:
            n = max(rows, inner, cols)
            counter.add_n3(Fraction(rows * inner * cols, n ** 3))
    return out


def spmv_block(p, x, counter=None):
    """Sparse ``p`` times dense block ``x``; counts one application per column."""
    x = as_matrix(x, "x", allow_vector=True)
    if p.shape[1] != x.shape[0]:
        raise ShapeError(f"cannot multiply sparse {p.shape} by block {x.shape}")
    out = _kernels.csr_matmul_into(p.indptr, p.indices, p.data, x)
    check_finite(out, "spmv result")
    if counter is not None:
        counter.add_spmv(x.shape[1])
    return out


def apply(m, x, counter=None):
    """Apply a dense or CSR matrix to a block."""
    if isinstance(m, CSRMatrix):
        return spmv_block(m, x, counter)
    return matmul(m, x, counter)


def trace(m):
    m = as_matrix(m)
    check_square(m)
    return complex(np.sum(np.diagonal(m)))


def frobenius_norm(m):
    m = np.asarray(m)
    return float(np.sqrt(np.sum(np.abs(m) ** 2)))


def rms_residual(phi, w_tilde):
    """Root-mean Frobenius residual ``||I - phi W~||_F / sqrt(N)`` (not counted)."""
    n = w_tilde.shape[0]
    return frobenius_norm(identity(n) - matmul(phi, w_tilde)) / math.sqrt(n)


class SpectralNormEstimate(NamedTuple):
    value: float
    converged: bool
    iterations: int


def operator_norm_estimate(matvec, rmatvec, n, tol, max_iters, seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((n, 1)).astype(np.complex128)
    v /= np.linalg.norm(v)
    previous = None
    best = 0.0
    for it in range(1, max_iters + 1):
        y = matvec(v)
        rayleigh = float(np.vdot(y, y).real)  # v* M* M v for unit v
        best = max(best, rayleigh)
        if rayleigh == 0.0:
            return SpectralNormEstimate(0.0, True, it)
        if previous is not None and abs(rayleigh - previous) < tol * rayleigh:
            return SpectralNormEstimate(math.sqrt(best), True, it)
        previous = rayleigh
        z = rmatvec(y)
        z_norm = np.linalg.norm(z)
        if z_norm == 0.0:
            return SpectralNormEstimate(math.sqrt(best), True, it)
        v = z / z_norm
    return SpectralNormEstimate(math.sqrt(best), False, max_iters)


def spectral_norm_estimate(m, tol=1e-10, max_iters=1000, seed=0):
    """Estimate ``||m||_2`` by power iteration on ``m* m``.

    The start vector is drawn from ``numpy.random.default_rng(seed)``.  Power
    iteration approaches the dominant singular value from below, so the
    returned value is a lower bound that tightens with ``tol``; clustered
    top singular values converge slowly.

    Returns
    -------
    SpectralNormEstimate
        ``(value, converged, iterations)``.  ``converged`` is False when
        ``max_iters`` was exhausted; ``value`` is then the best estimate seen.
    """
    if tol <= 0:
        raise DomainError("tol must be positive")
    if isinstance(m, CSRMatrix):
        mh = m.conj_transpose()
        return operator_norm_estimate(lambda v: spmv_block(m, v), lambda v: spmv_block(mh, v),
                           m.shape[1], tol, max_iters, seed)
    m = as_matrix(m)
    check_square(m)
    mh = np.ascontiguousarray(m.conj().T)
    return operator_norm_estimate(lambda v: _kernels.matmul_into(m, v),
                       lambda v: _kernels.matmul_into(mh, v),
                       m.shape[1], tol, max_iters, seed)


def direct_inverse_oracle(m):
    """Gauss-Jordan inverse with partial pivoting.

    Ground truth for tests and benchmarks.  A pivot whose magnitude does not
    exceed ``1e-13 * ||m||_F`` raises :class:`SingularMatrixError`.
    """
    m = as_matrix(m)
    check_square(m)
    n = m.shape[0]
    threshold = 1e-13 * frobenius_norm(m)
    aug = np.concatenate([m, identity(n)], axis=1)
    for col in range(n):
        pivot_row = col + int(np.argmax(np.abs(aug[col:, col])))
        pivot = aug[pivot_row, col]
        if abs(pivot) <= threshold:
            raise SingularMatrixError(col, abs(pivot), threshold)
        if pivot_row != col:
            aug[[col, pivot_row]] = aug[[pivot_row, col]]
        aug[col] /= pivot
        factors = aug[:, col].copy()
        factors[col] = 0.0
        aug -= np.outer(factors, aug[col])
    return np.ascontiguousarray(aug[:, n:])


def _log_spectrum(n, cond):
    if cond < 1:
        raise DomainError(f"condition number must be >= 1, got {cond}")
    if n == 1:
        return np.ones(1)
    return np.logspace(-math.log10(cond), 0.0, n)


def _haar_orthogonal(rng, n, complex_):
    g = rng.standard_normal((n, n))
    if complex_:
        g = g + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(g)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def random_spd(n, cond, seed):
    """Seeded real symmetric positive definite matrix ``Q diag(lam) Q^T``.

    The eigenvalues are log-uniformly spaced in ``[1/cond, 1]`` so the
    condition number equals ``cond`` by construction.
    """
    check_count(n, "n", minimum=1)
    lam = _log_spectrum(n, cond)
    q = _haar_orthogonal(np.random.default_rng(seed), n, complex_=False)
    qc = np.ascontiguousarray(q, dtype=np.complex128)
    m = _kernels.matmul_into(np.ascontiguousarray(qc * lam), np.ascontiguousarray(qc.T))
    m = 0.5 * (m + m.T)
    return np.ascontiguousarray(m.real.astype(np.complex128))


def random_matrix(n, cond, seed, complex_=False):
    """Seeded general square matrix ``U diag(s) V*`` with singular values in ``[1/cond, 1]``."""
    check_count(n, "n", minimum=1)
    s = _log_spectrum(n, cond)
    rng = np.random.default_rng(seed)
    u = np.ascontiguousarray(_haar_orthogonal(rng, n, complex_), dtype=np.complex128)
    v = np.ascontiguousarray(_haar_orthogonal(rng, n, complex_), dtype=np.complex128)
    return _kernels.matmul_into(np.ascontiguousarray(u * s), np.ascontiguousarray(v.conj().T))


def random_sparse_spd(n, density, seed):
    """Seeded sparse, strictly diagonally dominant SPD matrix in CSR form.

    The off-diagonal pattern is symmetric with roughly ``density`` of all
    entries nonzero; the diagonal is the absolute row sum plus one.
    """
    check_count(n, "n", minimum=1)
    if not 0.0 <= density <= 1.0:
        raise DomainError("density must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    half = scipy.sparse.random(n, n, density=density / 2.0, random_state=rng, format="csr")
    off = half + half.T
    off.setdiag(0.0)
    off.eliminate_zeros()
    off = -off
    diag = np.asarray(abs(off).sum(axis=1)).ravel() + 1.0
    return CSRMatrix.from_scipy(off + scipy.sparse.diags(diag))


def power_ladder(p, exponent, counter=None):
    """``p ** exponent`` by left-to-right binary squaring and multiplying.

    Only the running accumulator and ``p`` itself are kept.  The number of
    products is ``floor(log2 e) + popcount(e) - 1``; e.g. ``e = 14`` goes
    ``p -> p^2 -> p^3 -> p^6 -> p^7 -> p^14`` in five products.  ``e = 0``
    returns the identity.
    """
    p = as_matrix(p, "p")
    check_square(p, "p")
    exponent = check_count(exponent, "exponent")
    if exponent == 0:
        return identity(p.shape[0])
    if exponent.bit_length() > MAX_EXPONENT_BITS:
        raise BudgetError(f"exponent has {exponent.bit_length()} bits (> {MAX_EXPONENT_BITS})")
    acc = p.copy()
    _tally_n2(counter)
    for bit in bin(exponent)[3:]:
        acc = matmul(acc, acc, counter)
        if bit == "1":
            acc = matmul(acc, p, counter)
    return acc


def ladder_multiplies(exponent):
    """Number of products :func:`power_ladder` uses for ``exponent``."""
    exponent = check_count(exponent, "exponent")
    if exponent == 0:
        return 0
    return exponent.bit_length() - 1 + bin(exponent).count("1") - 1
