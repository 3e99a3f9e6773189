"""Scalar normalizations ``W~ = theta W`` and contraction checks."""

import enum
import math
from dataclasses import dataclass

import numpy as np

from .core import CSRMatrix, apply, identity, matmul, operator_norm_estimate, spectral_norm_estimate
from .exceptions import ContractionError, DegenerateProbeError, NotPSDError, ShapeError
from .validation import as_matrix, check_count, check_same_square, check_square

# Settings for the contraction measurements made while building a
# Normalization.  Power iteration only ever underestimates the norm.
CONTRACTION_TOL = 1e-10
CONTRACTION_MAX_ITERS = 2000


class ThetaKind(str, enum.Enum):
    TRACE = "trace"
    POWER = "power"


@dataclass(frozen=True)
class Normalization:
    theta: float
    kind: ThetaKind
    contraction_norm: float
    k_order: int = None

    def __post_init__(self):
        if not (self.theta > 0 and math.isfinite(self.theta)):
            raise ValueError(f"theta must be positive and finite, got {self.theta}")

    @property
    def valid(self):
        return self.contraction_norm < 1.0

    def as_dict(self):
        return {
            "theta": self.theta,
            "kind": self.kind.value,
            "k_order": self.k_order,
            "contraction_norm": self.contraction_norm,
            "valid": self.valid,
        }


def _measure_contraction(w, theta, seed=0):
    if isinstance(w, CSRMatrix):
        wh = w.conj_transpose()
    else:
        wh = np.ascontiguousarray(w.conj().T)
    return operator_norm_estimate(
        lambda v: v - theta * apply(w, v),
        lambda v: v - theta * apply(wh, v),
        w.shape[0], CONTRACTION_TOL, CONTRACTION_MAX_ITERS, seed,
    ).value


def _as_operator(w):
    if isinstance(w, CSRMatrix):
        if w.shape[0] != w.shape[1]:
            raise ShapeError(f"matrix must be square, got shape {w.shape}")
        return w
    return check_square(as_matrix(w, "w"), "w")


def theta_trace(w):
    """``theta = 1 / Tr(W)``, valid for any nonzero PSD matrix.

    Accepts dense arrays or :class:`CSRMatrix`.  The contraction norm
    ``||I - theta W||_2`` is measured, not assumed.
    """
    w = _as_operator(w)
    tr = w.trace() if isinstance(w, CSRMatrix) else complex(np.trace(w))
    if tr.real <= 0 or abs(tr.imag) > 1e-12 * abs(tr):
        raise NotPSDError(f"trace {tr} is not real and positive; input is not PSD")
    theta = 1.0 / tr.real
    return Normalization(theta, ThetaKind.TRACE, _measure_contraction(w, theta))


def theta_power(w, k, seed=0):
    """``theta = k ||W^k v||^2 / ((k+1) ||W^{k+1} v||^2)`` for a seeded unit probe ``v``.

    The powers are applied one mat-vec at a time with log-scale bookkeeping
    so large ``k`` cannot overflow.  The result may be invalid (contraction
    norm >= 1) for spectra far from unit scale; callers should then fall back
    to :func:`theta_trace`.  A probe annihilated by ``W`` is retried once with
    ``seed + 1``.
    """
    w = _as_operator(w)
    k = check_count(k, "k", minimum=1)
    n = w.shape[0]
    for attempt in (seed, seed + 1):
        rng = np.random.default_rng(attempt)
        v = rng.standard_normal((n, 1)).astype(np.complex128)
        v /= np.linalg.norm(v)
        log_norms = []
        log_scale = 0.0
        degenerate = False
        for _ in range(k + 1):
            v = apply(w, v)
            norm = np.linalg.norm(v)
            if norm == 0.0:
                degenerate = True
                break
            log_scale += math.log(norm)
            log_norms.append(log_scale)
            v /= norm
        if not degenerate:
            break
    else:
        raise DegenerateProbeError("W^(k+1) v vanished for two probe vectors")
    # log_norms[j] = log ||W^{j+1} v||
    theta = k / (k + 1) * math.exp(2.0 * (log_norms[k - 1] - log_norms[k]))
    return Normalization(theta, ThetaKind.POWER, _measure_contraction(w, theta), k_order=k)


def normalize(w, norm):
    """Return ``W~ = theta W``; refuses a normalization that does not contract."""
    if not norm.valid:
        raise ContractionError(
            f"normalization does not contract (||I - theta W||_2 ~ {norm.contraction_norm:.6g})"
        )
    if isinstance(w, CSRMatrix):
        return CSRMatrix.from_scipy(w.to_scipy() * norm.theta)
    return as_matrix(w, "w") * norm.theta


def contraction_check(phi, w_tilde, tol=CONTRACTION_TOL, max_iters=CONTRACTION_MAX_ITERS):
    """Power-iteration estimate of ``||I - phi W~||_2``."""
    phi = as_matrix(phi, "phi")
    w_tilde = as_matrix(w_tilde, "w_tilde")
    check_same_square(phi, w_tilde, ("phi", "w_tilde"))
    residual = identity(phi.shape[0]) - matmul(phi, w_tilde)
    return spectral_norm_estimate(residual, tol=tol, max_iters=max_iters).value
