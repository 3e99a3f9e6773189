"""Input validation helpers shared by the kernels, solvers and estimators.

Everything numeric in this package is carried as C-contiguous ``complex128``
arrays; real inputs simply get a zero imaginary part.
"""

import numpy as np

from .exceptions import NonFiniteError, ShapeError


def as_matrix(x, name="matrix", square=False, allow_vector=False):
    """Convert ``x`` to a finite, 2-D, C-contiguous complex128 array.

    Parameters
    ----------
    x : array_like
        Input data.
    name : str
        Used in error messages.
    square : bool
        Require ``rows == cols``.
    allow_vector : bool
        Promote 1-D input to a single column instead of rejecting it.
    """
    arr = np.asarray(x)
    if arr.ndim == 1 and allow_vector:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got ndim={arr.ndim}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ShapeError(f"{name} must be non-empty, got shape {arr.shape}")
    if square and arr.shape[0] != arr.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {arr.shape}")
    arr = np.ascontiguousarray(arr, dtype=np.complex128)
    check_finite(arr, name)
    return arr


def check_finite(arr, name="matrix"):
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"{name} contains NaN or Inf entries")
    return arr


def check_square(arr, name="matrix"):
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {arr.shape}")
    return arr


def check_conforming(a, b, names=("a", "b")):
    """Raise unless ``a @ b`` is defined."""
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"cannot multiply {names[0]} {a.shape} by {names[1]} {b.shape}"
        )


def check_same_square(a, b, names=("a", "b")):
    check_square(a, names[0])
    check_square(b, names[1])
    if a.shape != b.shape:
        raise ShapeError(f"{names[0]} {a.shape} and {names[1]} {b.shape} differ in size")


def check_count(value, name, minimum=0):
    """Validate a non-negative integer parameter (bools rejected)."""
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def maybe_real(arr, atol=0.0):
    """Drop the imaginary part when it is identically zero (or below ``atol``)."""
    if np.iscomplexobj(arr) and np.all(np.abs(arr.imag) <= atol):
        return np.ascontiguousarray(arr.real)
    return arr
