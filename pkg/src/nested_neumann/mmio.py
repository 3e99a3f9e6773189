"""Matrix Market input/output and atomic artifact writes."""

import io
import os
import tempfile
from contextlib import contextmanager

import numpy as np
import scipy.io
import scipy.sparse

from .core import CSRMatrix
from .validation import as_matrix, maybe_real

PRECISION = 17


@contextmanager
def atomic_write(path, mode="w"):
    """Write to a temporary file next to ``path`` and rename it into place."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, mode) as fh:
            yield fh
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text(path, text):
    with atomic_write(path) as fh:
        fh.write(text)


def read_matrix(path):
    """Read a Matrix Market file.

    Coordinate files become :class:`CSRMatrix`; array files become dense
    complex128 arrays.
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such file: {path}")
    try:
        data = scipy.io.mmread(path)
    except ValueError as exc:
        raise ValueError(f"{path}: not a readable Matrix Market file ({exc})") from exc
    if scipy.sparse.issparse(data):
        return CSRMatrix.from_scipy(data)
    return as_matrix(data, os.path.basename(path), allow_vector=True)


def _serialize(obj):
    buf = io.BytesIO()
    scipy.io.mmwrite(buf, obj, precision=PRECISION)
    return buf.getvalue()


def write_dense(path, m):
    """Write an array-format file; real field when every imaginary part is zero."""
    m = maybe_real(np.asarray(m))
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    with atomic_write(path, "wb") as fh:
        fh.write(_serialize(m))


def write_sparse(path, m):
    """Write a coordinate-format file from a :class:`CSRMatrix` or scipy sparse matrix."""
    if isinstance(m, CSRMatrix):
        m = m.to_scipy()
    m = scipy.sparse.coo_matrix(m)
    if np.iscomplexobj(m.data) and not np.any(m.data.imag):
        m = m.real
    with atomic_write(path, "wb") as fh:
        fh.write(_serialize(m))
