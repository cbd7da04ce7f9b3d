"""Complex-capable dense and sparse direct solves.

Everything is complex double precision: real problems simply carry zero
imaginary parts, which keeps one code path for Dirichlet/Neumann/Robin
alike.  Dense solves cover the element-level sub-problems; the global
indefinite Helmholtz systems go through a sparse LU factorization with
fill-reducing ordering (no iterative solvers).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SingularSystemError

logger = logging.getLogger(__name__)

# element-level systems only; the global path must use sparse_solve
DENSE_MAX_DIM = 200
_PIVOT_REL_TOL = 1e-14


@dataclass
class SparseSystem:
    """CSR matrix plus right-hand side, both complex128."""

    matrix: sp.csr_matrix
    rhs: np.ndarray

    def __post_init__(self):
        if not sp.issparse(self.matrix):
            self.matrix = sp.csr_matrix(np.asarray(self.matrix, dtype=np.complex128))
        self.matrix = self.matrix.tocsr().astype(np.complex128)
        self.matrix.sum_duplicates()
        self.matrix.sort_indices()
        self.rhs = np.asarray(self.rhs, dtype=np.complex128)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def row_offsets(self) -> np.ndarray:
        return self.matrix.indptr

    @property
    def col_indices(self) -> np.ndarray:
        return self.matrix.indices

    @property
    def values(self) -> np.ndarray:
        return self.matrix.data

    def validate(self) -> None:
        if self.n <= 0 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise ValueError(f"bad system shape {self.matrix.shape}")
        if self.rhs.shape != (self.n,):
            raise ValueError(f"rhs shape {self.rhs.shape} does not match n={self.n}")
        indptr, indices = self.matrix.indptr, self.matrix.indices
        for row in range(self.n):
            cols = indices[indptr[row]: indptr[row + 1]]
            if cols.size > 1 and np.any(np.diff(cols) <= 0):
                raise ValueError(f"column indices not strictly increasing in row {row}")
        pattern = self.matrix.copy()
        pattern.data = np.ones_like(pattern.data)
        if (pattern != pattern.T).nnz != 0:
            raise ValueError("sparsity pattern is not structurally symmetric")


def make_sparse_system(n: int, rows, cols, vals, rhs) -> SparseSystem:
    """Assemble COO triplets (duplicates summed) into a SparseSystem."""
    mat = sp.coo_matrix(
        (np.asarray(vals, dtype=np.complex128), (rows, cols)), shape=(n, n)
    ).tocsr()
    return SparseSystem(mat, rhs)


class DenseFactor:
    """LU factorization (partial pivoting) of a small dense complex matrix.

    Factorization fails loudly when a pivot falls below the relative
    singularity threshold, naming the offending context.
    """

    def __init__(self, a: np.ndarray, context: str = ""):
        a = np.asarray(a, dtype=np.complex128)
        k = a.shape[0]
        if a.shape != (k, k):
            raise ValueError(f"matrix is not square: {a.shape}")
        if k > DENSE_MAX_DIM:
            raise ValueError(
                f"dense solve limited to {DENSE_MAX_DIM}x{DENSE_MAX_DIM} systems, got {k}"
            )
        self.context = context
        self._lu, self._piv = sla.lu_factor(a, check_finite=False)
        scale = np.abs(a).max()
        pivots = np.abs(np.diag(self._lu))
        if scale == 0.0 or np.any(pivots < _PIVOT_REL_TOL * scale):
            raise SingularSystemError(
                "numerically singular dense system "
                f"(min pivot {pivots.min() if scale else 0.0:.3e}, scale {scale:.3e})",
                context=context,
            )

    def solve(self, b: np.ndarray) -> np.ndarray:
        return sla.lu_solve((self._lu, self._piv), np.asarray(b, dtype=np.complex128),
                            check_finite=False)


def dense_solve(a: np.ndarray, b: np.ndarray, context: str = "") -> np.ndarray:
    """Solve a small dense complex system with partial pivoting.

    ``b`` may be a vector or a matrix of stacked right-hand sides.
    """
    return DenseFactor(a, context=context).solve(b)


def sparse_solve(system: SparseSystem, context: str = "") -> np.ndarray:
    """Direct sparse LU solve (fill-reducing ordering, deterministic).

    Raises SingularSystemError when the factorization breaks down, which for
    the Helmholtz systems here means c^2 sits (numerically) on a discrete
    eigenvalue; perturbing c is the standard remedy.
    """
    mat = system.matrix.tocsc()
    try:
        factor = spla.splu(mat)
        x = factor.solve(system.rhs)
    except RuntimeError as exc:
        raise SingularSystemError(
            f"sparse factorization failed ({exc}); "
            "c^2 may coincide with a discrete eigenvalue - try perturbing c",
            context=context,
        ) from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystemError(
            "sparse solve produced non-finite values; "
            "c^2 may coincide with a discrete eigenvalue - try perturbing c",
            context=context,
        )
    rhs_norm = np.abs(system.rhs).max() if system.rhs.size else 0.0
    if rhs_norm > 0:
        residual = np.abs(system.matrix @ x - system.rhs).max() / rhs_norm
        if residual > 1e-6:
            logger.warning("sparse solve residual %.3e (n=%d)%s", residual, system.n,
                           f" [{context}]" if context else "")
    return x
