import os

import numpy as np
import pytest

from nested_neumann import CSRMatrix, random_matrix, random_sparse_spd, random_spd
from nested_neumann.mmio import atomic_write, read_matrix, write_dense, write_sparse, write_text


class TestRoundTrip:
    def test_dense_real_is_exact(self, tmp_path):
        m = random_spd(8, 1e3, 0)
        path = tmp_path / "m.mtx"
        write_dense(path, m)
        assert "real" in path.read_text().splitlines()[0]
        np.testing.assert_array_equal(read_matrix(path), m)

    def test_dense_complex_is_exact(self, tmp_path):
        m = random_matrix(6, 10.0, 1, complex_=True)
        path = tmp_path / "c.mtx"
        write_dense(path, m)
        assert "complex" in path.read_text().splitlines()[0]
        np.testing.assert_array_equal(read_matrix(path), m)

    def test_vector_becomes_column(self, tmp_path):
        path = tmp_path / "v.mtx"
        write_dense(path, np.arange(3.0))
        assert read_matrix(path).shape == (3, 1)

    def test_sparse(self, tmp_path):
        m = random_sparse_spd(20, 0.1, 2)
        path = tmp_path / "s.mtx"
        write_sparse(path, m)
        back = read_matrix(path)
        assert isinstance(back, CSRMatrix)
        np.testing.assert_array_equal(back.to_dense(), m.to_dense())

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            read_matrix(tmp_path / "nope.mtx")

    def test_garbage(self, tmp_path):
        path = tmp_path / "bad.mtx"
        path.write_text("not a matrix\n")
        with pytest.raises(ValueError, match="Matrix Market"):
            read_matrix(path)


class TestAtomicWrite:
    def test_failure_leaves_old_file(self, tmp_path):
        path = tmp_path / "report.json"
        write_text(path, "old\n")
        with pytest.raises(RuntimeError):
            with atomic_write(path) as fh:
                fh.write("half")
                raise RuntimeError("crash")
        assert path.read_text() == "old\n"
        assert os.listdir(tmp_path) == ["report.json"]

    def test_replaces(self, tmp_path):
        path = tmp_path / "x.txt"
        write_text(path, "a")
        write_text(path, "b")
        assert path.read_text() == "b"
