"""Sparse complex operators on enumerated finite bases.

Thin immutable wrapper over ``scipy.sparse`` CSR storage with the handful of
operations the representation code needs, plus Matrix Market I/O.
"""

from __future__ import annotations

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from . import _kernels

__all__ = [
    "SparseOperator",
    "compose",
    "adjoint",
    "block_diag",
    "hermitian_spectrum",
    "operator_norm_lb",
    "power_history",
    "write_matrix_market",
    "read_matrix_market",
    "NonHermitianError",
]

class NonHermitianError(ValueError):
    pass


class SparseOperator:
    """Square sparse matrix with complex entries; no explicit zeros are stored."""

    __slots__ = ("_m",)

    def __init__(self, matrix):
        m = sp.csr_matrix(matrix, dtype=np.complex128)
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"operator must be square, got shape {m.shape}")
        m.sum_duplicates()
        m.eliminate_zeros()
        m.sort_indices()
        self._m = m

    @classmethod
    def from_entries(cls, dim, entries):
        if entries:
            rows, cols, vals = zip(*((r, c, v) for (r, c), v in entries.items()))
        else:
            rows, cols, vals = (), (), ()
        return cls(sp.coo_matrix((np.asarray(vals, dtype=np.complex128), (rows, cols)), shape=(dim, dim)))

    @classmethod
    def from_triplets(cls, dim, rows, cols, vals):
        return cls(sp.coo_matrix((np.asarray(vals, dtype=np.complex128), (rows, cols)), shape=(dim, dim)))

    @classmethod
    def identity(cls, dim):
        return cls(sp.identity(dim, dtype=np.complex128, format="csr"))

    @classmethod
    def zeros(cls, dim):
        return cls(sp.csr_matrix((dim, dim), dtype=np.complex128))

    @classmethod
    def diag(cls, values):
        values = np.asarray(values, dtype=np.complex128)
        return cls(sp.diags(values, format="csr"))

    # views
    @property
    def dim(self) -> int:
        return self._m.shape[0]

    @property
    def shape(self):
        return self._m.shape

    @property
    def nnz(self) -> int:
        return self._m.nnz

    @property
    def csr(self):
        return self._m.copy()

    @property
    def entries(self):
        coo = self._m.tocoo()
        return {(int(r), int(c)): complex(v) for r, c, v in zip(coo.row, coo.col, coo.data)}

    def to_dense(self):
        return self._m.toarray()

    def diagonal(self):
        return self._m.diagonal()

    def off_diagonal_max(self) -> float:
        coo = self._m.tocoo()
        mask = coo.row != coo.col
        return float(np.abs(coo.data[mask]).max()) if mask.any() else 0.0

    def is_diagonal(self) -> bool:
        coo = self._m.tocoo()
        return bool(np.all(coo.row == coo.col))

    def max_abs(self) -> float:
        return float(np.abs(self._m.data).max()) if self._m.nnz else 0.0

    # algebra
    def adjoint(self):
        return SparseOperator(self._m.conj().T)

    @property
    def H(self):
        return self.adjoint()

    def compose(self, other):
        return compose(self, other)

    def __matmul__(self, other):
        if isinstance(other, SparseOperator):
            return compose(self, other)
        return self._m @ np.asarray(other)

    def _same_dim(self, other):
        if not isinstance(other, SparseOperator):
            raise TypeError("expected SparseOperator")
        if other.dim != self.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")

    def __add__(self, other):
        self._same_dim(other)
        return SparseOperator(self._m + other._m)

    def __sub__(self, other):
        self._same_dim(other)
        return SparseOperator(self._m - other._m)

    def __neg__(self):
        return SparseOperator(-self._m)

    def __mul__(self, c):
        return SparseOperator(self._m * complex(c))

    __rmul__ = __mul__

    def matvec(self, x):
        x = np.asarray(x, dtype=np.complex128)
        return _kernels.csr_matvec(self._m.indptr, self._m.indices, self._m.data, x)

    def rmatvec(self, y):
        y = np.asarray(y, dtype=np.complex128)
        return _kernels.csr_rmatvec(self._m.indptr, self._m.indices, self._m.data, y, self.dim)

    def column_norms(self):
        return _kernels.csr_col_norms(self._m.indptr, self._m.indices, self._m.data, self.dim)

    def allclose(self, other, rtol=0.0, atol=1e-12):
        """Entrywise |A - B| <= atol + rtol * (|A| + |B|)."""
        self._same_dim(other)
        d = (self._m - other._m).tocoo()
        if d.nnz == 0:
            return True
        scale = np.asarray(abs(self._m)[d.row, d.col]).ravel() + np.asarray(abs(other._m)[d.row, d.col]).ravel()
        return bool(np.all(np.abs(d.data) <= atol + rtol * scale))

    def __repr__(self):
        return f"SparseOperator(dim={self.dim}, nnz={self.nnz})"


def compose(A: SparseOperator, B: SparseOperator) -> SparseOperator:
    A._same_dim(B)
    return SparseOperator(A._m @ B._m)


def adjoint(A: SparseOperator) -> SparseOperator:
    return A.adjoint()


def block_diag(ops) -> SparseOperator:
    ops = list(ops)
    if not ops:
        raise ValueError("no blocks")
    return SparseOperator(sp.block_diag([op._m for op in ops], format="csr"))


def hermitian_spectrum(A: SparseOperator, tol: float = 1e-12):
    """Ascending eigenvalues of a Hermitian operator.

    Diagonal input is read off exactly; otherwise the matrix is split into
    connected components of its sparsity graph and each block is solved
    densely (the representation operators split into many small blocks).
    """
    if A.dim == 0:
        return np.zeros(0)
    m = A._m
    asym = abs(m - m.conj().T)
    scale = max(1.0, A.max_abs())
    if asym.nnz and asym.max() > tol * scale:
        raise NonHermitianError(f"operator is not Hermitian (max |A - A*| = {asym.max():.3g})")
    if A.is_diagonal():
        return np.sort(A.diagonal().real)
    ncomp, labels = connected_components(abs(m), directed=False)
    vals = []
    for c in range(ncomp):
        idx = np.flatnonzero(labels == c)
        block = m[idx][:, idx].toarray()
        vals.append(scipy.linalg.eigvalsh(block))
    return np.sort(np.concatenate(vals))


def _start_vector(dim, seed):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(dim) + 1j * rng.standard_normal(dim)


def power_history(A: SparseOperator, iterations: int, seed: int = 0, start=None):
    """Rayleigh quotients <x_k, A*A x_k> of the power iteration, and the last iterate."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if A.dim == 0:
        raise ValueError("zero-dimensional operator")
    x0 = _start_vector(A.dim, seed) if start is None else np.asarray(start, dtype=np.complex128)
    if not np.any(x0):
        x0 = _start_vector(A.dim, seed)
    m = A._m
    hist, x = _kernels.power_iteration(m.indptr, m.indices, m.data, A.dim, x0, iterations)
    return np.sqrt(np.maximum(hist, 0.0)), x


def operator_norm_lb(A: SparseOperator, iterations: int = 200, seed: int = 0, start=None, return_vector=False):
    """Lower bound for the largest singular value.

    Diagonal operators return max |entry| (the exact norm). Otherwise power
    iteration on A*A from a seeded random start (or ``start``); the result is
    sqrt of the final Rayleigh quotient.
    """
    if A.dim == 0:
        raise ValueError("zero-dimensional operator")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if A.is_diagonal():
        d = np.abs(A.diagonal())
        if return_vector:
            v = np.zeros(A.dim, dtype=np.complex128)
            v[int(np.argmax(d))] = 1.0
            return float(d.max()), v
        return float(d.max())
    hist, x = power_history(A, iterations, seed, start)
    val = float(hist.max())
    return (val, x) if return_vector else val


def write_matrix_market(A: SparseOperator, target, comment: str = ""):
    """Coordinate/complex Matrix Market with 17 significant digits (round-trips doubles)."""
    scipy.io.mmwrite(target, A._m, comment=comment, field="complex", precision=17)


def read_matrix_market(source) -> SparseOperator:
    return SparseOperator(scipy.io.mmread(source))
