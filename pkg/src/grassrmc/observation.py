"""Observed index set and the masked arithmetic built on it.

Values that live on the observed set (the data ``M``, the sparse component
``S``, residuals, steps) are plain float arrays of length ``|Omega|`` aligned
entry-for-entry with :attr:`ObservationSet.rows` / :attr:`ObservationSet.cols`.
Nothing here ever forms a dense ``m x n`` product.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import _parallel
from .errors import DimensionMismatch, DuplicateEntry, IndexOutOfRange, NonFiniteValue

# inner products of length r performed by product_on_omega; tests read this
counters = {"inner_products": 0}


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Observed entries of an ``m x n`` matrix in column-major (CSC) order.

    Entries are grouped by column, rows sorted inside each column, and
    ``col_ptr[j]:col_ptr[j + 1]`` indexes column ``j``. Build instances with
    :meth:`from_arrays` or :func:`build_observation_set`; the raw constructor
    performs no validation.
    """

    m: int
    n: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    col_ptr: np.ndarray

    @classmethod
    def from_arrays(cls, m, n, rows, cols, values):
        m, n = int(m), int(n)
        if m < 1 or n < 1:
            raise DimensionMismatch(f"matrix shape must be positive, got {m}x{n}")
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        values = np.asarray(values, dtype=np.float64)
        if not (rows.ndim == cols.ndim == values.ndim == 1) or not (
            rows.shape == cols.shape == values.shape
        ):
            raise DimensionMismatch("rows, cols and values must be 1-d arrays of equal length")
        if rows.size and not (
            np.issubdtype(rows.dtype, np.integer) and np.issubdtype(cols.dtype, np.integer)
        ):
            if not (np.all(rows == np.floor(rows)) and np.all(cols == np.floor(cols))):
                raise IndexOutOfRange("indices must be integers")
        rows = rows.astype(np.int64)
        cols = cols.astype(np.int64)
        bad = (rows < 0) | (rows >= m) | (cols < 0) | (cols >= n)
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            raise IndexOutOfRange(f"entry ({rows[k]}, {cols[k]}) outside {m}x{n}")
        if not np.all(np.isfinite(values)):
            k = int(np.flatnonzero(~np.isfinite(values))[0])
            raise NonFiniteValue(f"entry ({rows[k]}, {cols[k]}) has value {values[k]}")

        order = np.lexsort((rows, cols))
        rows, cols, values = rows[order], cols[order], values[order]
        dup = (rows[1:] == rows[:-1]) & (cols[1:] == cols[:-1])
        if dup.any():
            k = int(np.flatnonzero(dup)[0])
            raise DuplicateEntry(f"entry ({rows[k]}, {cols[k]}) given more than once")

        col_ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(cols, minlength=n), out=col_ptr[1:])
        for a in (rows, cols, values, col_ptr):
            a.setflags(write=False)
        return cls(m, n, rows, cols, values, col_ptr)

    @property
    def nnz(self):
        return self.rows.size

    @property
    def shape(self):
        return (self.m, self.n)

    def column(self, j):
        """Row indices and values observed in column ``j``."""
        lo, hi = self.col_ptr[j], self.col_ptr[j + 1]
        return self.rows[lo:hi], self.values[lo:hi]

    def triples(self):
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.values.tolist()))

    @cached_property
    def _row_major(self):
        # permutation into row-major order plus row pointers, for row-sliced kernels
        perm = np.lexsort((self.cols, self.rows))
        row_ptr = np.zeros(self.m + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.rows, minlength=self.m), out=row_ptr[1:])
        return perm, row_ptr

    @cached_property
    def column_sum(self):
        """Sparse ``n x |Omega|`` operator summing entry-aligned rows per column."""
        return sp.csr_matrix(
            (np.ones(self.nnz), np.arange(self.nnz), self.col_ptr), shape=(self.n, self.nnz)
        )

    def to_sparse(self, values=None):
        """CSC matrix with this pattern; ``values`` defaults to the data."""
        vals = self.values if values is None else check_aligned(self, values)
        return sp.csc_matrix((vals, self.rows, self.col_ptr), shape=self.shape)

    def to_csr(self, values=None):
        vals = self.values if values is None else check_aligned(self, values)
        perm, row_ptr = self._row_major
        return sp.csr_matrix((vals[perm], self.cols[perm], row_ptr), shape=self.shape)

    def to_dense(self, values=None):
        """Zero-filled dense matrix. For tests and small problems only."""
        vals = self.values if values is None else check_aligned(self, values)
        out = np.zeros(self.shape)
        out[self.rows, self.cols] = vals
        return out

    def mask(self):
        out = np.zeros(self.shape, dtype=bool)
        out[self.rows, self.cols] = True
        return out

    def restrict(self, dense):
        """Values of a dense ``m x n`` matrix on the observed set."""
        dense = np.asarray(dense)
        if dense.shape != self.shape:
            raise DimensionMismatch(f"expected {self.shape}, got {dense.shape}")
        return dense[self.rows, self.cols]

    def with_values(self, values):
        values = check_aligned(self, values)
        if not np.all(np.isfinite(values)):
            raise NonFiniteValue("values must be finite")
        values = np.array(values, dtype=np.float64)
        values.setflags(write=False)
        return ObservationSet(self.m, self.n, self.rows, self.cols, values, self.col_ptr)


def build_observation_set(m, n, triples):
    """Build an :class:`ObservationSet` from ``(i, j, value)`` triples."""
    triples = list(triples)
    if triples:
        rows, cols, values = zip(*triples)
    else:
        rows, cols, values = (), (), ()
    return ObservationSet.from_arrays(
        m, n, np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64),
        np.array(values, dtype=np.float64),
    )


def check_aligned(obs, values):
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (obs.nnz,):
        raise DimensionMismatch(f"expected {obs.nnz} values on Omega, got shape {values.shape}")
    return values


def zeros_on_omega(obs):
    return np.zeros(obs.nnz)


def _factor_dims(obs, U, V):
    U = np.asarray(U)
    V = np.asarray(V)
    if U.ndim != 2 or V.ndim != 2 or U.shape[0] != obs.m or V.shape[1] != obs.n or U.shape[1] != V.shape[0]:
        raise DimensionMismatch(
            f"U {U.shape} and V {V.shape} incompatible with {obs.m}x{obs.n} observations"
        )
    return U, V


def product_on_omega(obs, U, V):
    """``(UV)_ij`` for every observed ``(i, j)``; one length-r dot per entry."""
    U, V = _factor_dims(obs, U, V)
    Vt = np.ascontiguousarray(V.T)
    out = np.empty(obs.nnz)
    rows, cols = obs.rows, obs.cols

    def work(lo, hi):
        out[lo:hi] = np.einsum("ij,ij->i", U[rows[lo:hi]], Vt[cols[lo:hi]])

    _parallel.run_slices(obs.nnz, work)
    counters["inner_products"] += obs.nnz
    return out


def residual_on_omega(obs, U, V, S):
    """``P_Omega(UV - M + S)`` as values on the observed set."""
    S = check_aligned(obs, S)
    return product_on_omega(obs, U, V) - obs.values + S


def project_complement_norm_sq(obs, U, V):
    """``||P_Omegabar(UV)||_F^2`` for orthonormal ``U``.

    Uses ``||UV||_F = ||V||_F`` and subtracts the observed part, so the cost
    is ``O(|Omega| r)``. Clamped at zero against rounding.
    """
    U, V = _factor_dims(obs, U, V)
    on = product_on_omega(obs, U, V)
    total = float(np.vdot(V, V))
    return max(total - float(np.dot(on, on)), 0.0)
