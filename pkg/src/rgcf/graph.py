"""Bipartite adjacency and the self-loop weighted propagation operator.

Node layout: users occupy rows ``0..m-1``, items rows ``m..m+n-1``.
The operator is

    P = (D + lam*I)^-1/2 (A + lam*I) (D + lam*I)^-1/2

with ``D`` the diagonal of row sums of ``A``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .data import InteractionDataset


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Compressed-sparse-row matrix with validated structure."""

    rows: int
    cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        off, idx = self.row_offsets, self.col_indices
        if off.shape != (self.rows + 1,) or off[0] != 0 or off[-1] != idx.size:
            raise ValueError("row_offsets must have rows+1 entries ending at nnz")
        if np.any(np.diff(off) < 0):
            raise ValueError("row_offsets must be non-decreasing")
        if idx.size != self.values.size:
            raise ValueError("col_indices and values differ in length")
        if idx.size:
            if idx.min() < 0 or idx.max() >= self.cols:
                raise ValueError("column index out of range")
            # strictly increasing within each row; row starts reset the check
            steps = np.diff(idx)
            row_start = np.zeros(idx.size, dtype=bool)
            row_start[off[1:-1][off[1:-1] < idx.size]] = True
            if np.any((steps <= 0) & ~row_start[1:]):
                raise ValueError("column indices must be strictly increasing within a row")
        for arr in (off, idx, self.values):
            arr.flags.writeable = False

    @classmethod
    def from_scipy(cls, mat) -> "SparseMatrix":
        mat = sp.csr_matrix(mat)
        mat.sum_duplicates()
        mat.sort_indices()
        return cls(mat.shape[0], mat.shape[1], mat.indptr.astype(np.int64),
                   mat.indices.astype(np.int64), mat.data.astype(np.float64))

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows, self.cols

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, self.col_indices, self.row_offsets), shape=self.shape)

    def toarray(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.to_scipy().sum(axis=1), dtype=np.float64).ravel()

    def triples(self):
        """Yield ``(row, col, value)`` for every stored entry."""
        rows = np.repeat(np.arange(self.rows), np.diff(self.row_offsets))
        return zip(rows.tolist(), self.col_indices.tolist(), self.values.tolist())


@dataclass(frozen=True, eq=False)
class PropagationOperator:
    matrix: SparseMatrix
    lam: float
    degrees: np.ndarray

    def __post_init__(self):
        # scipy view reused by every spmm call
        object.__setattr__(self, "_csr", self.matrix.to_scipy())

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


def build_adjacency(d: InteractionDataset) -> SparseMatrix:
    """Symmetric 0/1 matrix ``[[0, R], [R^T, 0]]`` over the train pairs."""
    m, n = d.num_users, d.num_items
    u, i = d.train.users, d.train.items + m
    rows = np.concatenate([u, i])
    cols = np.concatenate([i, u])
    mat = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(m + n, m + n))
    return SparseMatrix.from_scipy(mat)


def _inv_sqrt(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x, dtype=np.float64)
    pos = x > 0
    out[pos] = 1.0 / np.sqrt(x[pos])
    return out


def build_unnormalized(a: SparseMatrix, lam: float) -> SparseMatrix:
    """``A + lam*I`` without degree normalization."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    mat = a.to_scipy()
    if lam:
        mat = mat + lam * sp.identity(a.rows, format="csr")
    return SparseMatrix.from_scipy(mat)


def build_propagation(a: SparseMatrix, lam: float) -> PropagationOperator:
    """Normalized operator with self-loop weight ``lam``.

    Entry for edge (v, w) is ``1/sqrt((d_v+lam)(d_w+lam))`` and the diagonal
    is ``lam/(d_v+lam)``. Nodes with ``d_v + lam == 0`` get an all-zero row.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if a.rows != a.cols:
        raise ValueError("adjacency must be square")
    lam = float(lam)
    degrees = a.row_sums().astype(np.float64)
    shifted = degrees + lam
    rows = np.repeat(np.arange(a.rows), np.diff(a.row_offsets))
    # the product commutes exactly, so mirrored entries are bit-identical
    vals = _inv_sqrt(shifted[rows] * shifted[a.col_indices]) * a.values
    mat = sp.csr_matrix((vals, a.col_indices, a.row_offsets), shape=a.shape)
    if lam:
        mat = mat + sp.diags(lam / shifted, format="csr")
    mat.eliminate_zeros()
    return PropagationOperator(SparseMatrix.from_scipy(mat), lam, degrees)


def spmm(p: PropagationOperator | SparseMatrix, e: np.ndarray) -> np.ndarray:
    """Sparse-times-dense product; result keeps the dtype of ``e``."""
    e = np.asarray(e)
    csr = p._csr if isinstance(p, PropagationOperator) else p.to_scipy()
    if e.ndim != 2 or e.shape[0] != csr.shape[1]:
        raise ValueError(f"shape mismatch: operator {csr.shape} vs embeddings {e.shape}")
    out = csr @ e
    return np.asarray(out, dtype=e.dtype)
